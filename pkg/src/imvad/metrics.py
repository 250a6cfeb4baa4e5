"""Overlap-based F1 between predicted and known anomaly sequences.

Counting is per sequence, on each side: every predicted sequence overlapping
at least one known sequence is a true positive, every predicted sequence
overlapping none is a false positive, and every known sequence overlapping no
prediction is a false negative. Intervals are half-open; overlap means a
nonempty intersection. Per-series F1 values average arithmetically within a
sub-dataset, and sub-dataset means combine into the dataset mean weighted by
series count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InvalidInputError

Interval = tuple[int, int]


@dataclass(frozen=True)
class OverlapCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "OverlapCounts") -> "OverlapCounts":
        return OverlapCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def _check_intervals(intervals, name: str) -> list[Interval]:
    out = []
    for iv in intervals:
        start, end = int(iv[0]), int(iv[1])
        if start >= end:
            raise InvalidInputError(f"{name} interval [{start}, {end}) is empty or inverted")
        out.append((start, end))
    return out


def overlaps(a: Interval, b: Interval) -> bool:
    return max(a[0], b[0]) < min(a[1], b[1])


def overlap_counts(predicted, truth) -> OverlapCounts:
    """Sequence-level hit/miss counts between two interval lists."""
    predicted = _check_intervals(predicted, "predicted")
    truth = _check_intervals(truth, "truth")
    tp = sum(1 for p in predicted if any(overlaps(p, t) for t in truth))
    fp = len(predicted) - tp
    fn = sum(1 for t in truth if not any(overlaps(p, t) for p in predicted))
    return OverlapCounts(tp=tp, fp=fp, fn=fn)


def f1(counts: OverlapCounts) -> float:
    """Harmonic mean of precision and recall; 0 on any zero denominator."""
    if counts.tp == 0:
        return 0.0
    precision = counts.tp / (counts.tp + counts.fp)
    recall = counts.tp / (counts.tp + counts.fn)
    return 2.0 * precision * recall / (precision + recall)


def series_f1(predicted, truth) -> float:
    return f1(overlap_counts(predicted, truth))


@dataclass
class EvalReport:
    """F1 at the series, sub-dataset, and dataset level."""

    per_series: dict[str, list[float]]
    sub_means: dict[str, float] = field(init=False)
    sub_counts: dict[str, int] = field(init=False)
    dataset_mean: float = field(init=False)

    def __post_init__(self):
        self.sub_means = {}
        self.sub_counts = {}
        total = 0.0
        weight = 0
        for sub, scores in self.per_series.items():
            if not scores:
                raise InvalidInputError(f"sub-dataset {sub!r} has no series")
            self.sub_counts[sub] = len(scores)
            self.sub_means[sub] = sum(scores) / len(scores)
            total += sum(scores)
            weight += len(scores)
        if weight == 0:
            raise InvalidInputError("no sub-datasets to aggregate")
        # weighting sub-dataset means by series count == pooling all series
        self.dataset_mean = total / weight


def aggregate(per_series: dict[str, list[float]]) -> EvalReport:
    """Sub-dataset means plus the series-count-weighted dataset mean."""
    return EvalReport(per_series={k: list(v) for k, v in per_series.items()})


def render_table(report: EvalReport, *, name: str = "dataset", sep: str = "\t") -> str:
    """Delimiter-separated layout: one column per sub-dataset, then the mean."""
    subs = list(report.sub_means)
    header = sep.join(["model"] + [f"{s} (n={report.sub_counts[s]})" for s in subs] + ["mean"])
    row = sep.join([name] + [f"{report.sub_means[s]:.3f}" for s in subs]
                   + [f"{report.dataset_mean:.3f}"])
    return header + "\n" + row + "\n"


def report_as_dict(report: EvalReport) -> dict:
    return {
        "per_series": {k: list(v) for k, v in report.per_series.items()},
        "sub_means": dict(report.sub_means),
        "sub_counts": dict(report.sub_counts),
        "dataset_mean": report.dataset_mean,
    }
