"""Per-step anomaly scores, adaptive thresholding, grouping, and pruning.

Scores are the window reconstruction error ``0.5 * sum((x - x_hat)^2)`` with
deterministic (posterior-mean) encoding. A step is flagged when its score
strictly exceeds ``mean + 2 * std`` over all scorable steps (population std
throughout). Runs of flagged steps form anomaly sequences; the pruning pass
sorts the sequences' maximum scores in descending order, computes descent
rates ``p_i = (m_{i-1} - m_i) / m_i``, and at the first rank ``i >= 2`` where
``p_i < theta`` and ``m_i < 4 * std`` and ``m_i < lambda * m_1`` amends that
sequence and all later-ranked ones to normal. Steps without a full window are
never scored and are reported non-anomalous.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import FormatError, InvalidInputError
from .imaging import encode_series_windows
from .series import TimeSeries, impute_missing, standardize
from .training import to_training_batch
from .windows import iter_windows, scorable_range


@dataclass(frozen=True)
class DetectConfig:
    window_size: int = 64
    theta: float = 0.1
    lam: float = 0.95
    batch_size: int = 128

    def __post_init__(self):
        if not 0 < self.theta:
            raise InvalidInputError("theta must be positive")
        if not 0 < self.lam:
            raise InvalidInputError("lambda must be positive")


@dataclass
class ScoreSeries:
    """Scores for every scorable step, with their population statistics."""

    steps: np.ndarray
    values: np.ndarray
    mean: float = field(init=False)
    std: float = field(init=False)

    def __post_init__(self):
        self.steps = np.asarray(self.steps, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.steps.shape != self.values.shape or self.steps.size == 0:
            raise InvalidInputError("scores need one value per scorable step")
        self.mean = float(self.values.mean())
        self.std = float(self.values.std())

    def as_dict(self) -> dict[int, float]:
        return {int(k): float(v) for k, v in zip(self.steps, self.values)}


@dataclass(frozen=True)
class AnomalySequence:
    start: int  # first step index
    end: int    # half-open
    max_score: float

    def __post_init__(self):
        if self.start >= self.end:
            raise InvalidInputError(f"empty anomaly sequence [{self.start}, {self.end})")


@dataclass
class DetectionReport:
    series_id: str
    scores: ScoreSeries
    threshold: float
    sequences_raw: list[AnomalySequence]
    sequences_pruned: list[AnomalySequence]
    predictions: np.ndarray  # bool, full series length
    timestamps: np.ndarray | None = None


def score_series(model, series: TimeSeries, N: int, *, batch_size: int = 128) -> ScoreSeries:
    """Reconstruction error at every scorable step, deterministically.

    ``model`` needs a ``reconstruct(batch)`` accepting [B, C, N, N]; the
    series is standardized and encoded exactly as during training.
    """
    if series.has_missing:
        series = impute_missing(series, "linear")
    std_series, _ = standardize(series)
    steps = np.fromiter(scorable_range(len(series), N), dtype=np.int64)
    encoded = encode_series_windows(iter_windows(std_series, N, 1))
    data = to_training_batch(encoded)
    values = np.empty(len(steps), dtype=np.float64)
    with torch.no_grad():
        for i in range(0, data.shape[0], batch_size):
            batch = data[i:i + batch_size]
            x_hat = model.reconstruct(batch)
            diff = (batch.to(torch.float64) - x_hat.to(torch.float64)) ** 2
            values[i:i + batch.shape[0]] = 0.5 * diff.sum(dim=(1, 2, 3)).numpy()
    return ScoreSeries(steps=steps, values=values)


def threshold(scores: ScoreSeries) -> float:
    """Two population standard deviations above the mean."""
    return scores.mean + 2.0 * scores.std


def flag_steps(scores: ScoreSeries, thresh: float) -> np.ndarray:
    return scores.values > thresh  # strictly above


def group_sequences(flags, steps=None, scores=None) -> list[AnomalySequence]:
    """Maximal runs of consecutive flagged steps, with their peak scores."""
    flags = np.asarray(flags, dtype=bool)
    if steps is None:
        steps = np.arange(flags.size)
    steps = np.asarray(steps, dtype=np.int64)
    if scores is not None:
        scores = np.asarray(scores, dtype=np.float64)
    out = []
    i = 0
    while i < flags.size:
        if flags[i]:
            j = i
            while j + 1 < flags.size and flags[j + 1]:
                j += 1
            peak = float(scores[i:j + 1].max()) if scores is not None else 0.0
            out.append(AnomalySequence(start=int(steps[i]), end=int(steps[j]) + 1, max_score=peak))
            i = j + 1
        else:
            i += 1
    return out


def prune(sequences: list[AnomalySequence], std: float, theta: float = 0.1,
          lam: float = 0.95) -> list[AnomalySequence]:
    """Drop the low-salience tail of the sequences, per the descent-rate rule.

    The scan starts at sorted rank 2 (rank 1 has no descent rate), so the
    top-scoring sequence always survives. Ties in the descending sort break
    toward the earlier start index.
    """
    if len(sequences) < 2:
        return list(sequences)
    ranked = sorted(sequences, key=lambda s: (-s.max_score, s.start))
    cut = None
    top = ranked[0].max_score
    for i in range(1, len(ranked)):
        m_i = ranked[i].max_score
        if m_i <= 0:
            continue
        p_i = (ranked[i - 1].max_score - m_i) / m_i
        if p_i < theta and m_i < 4.0 * std and m_i < lam * top:
            cut = i
            break
    if cut is None:
        return list(sequences)
    kept = ranked[:cut]
    return sorted(kept, key=lambda s: s.start)


def report_from_scores(scores: ScoreSeries, *, series_id: str, length: int,
                       theta: float = 0.1, lam: float = 0.95,
                       timestamps=None) -> DetectionReport:
    """Threshold, group, and prune a score series into a full report."""
    thresh = threshold(scores)
    flags = flag_steps(scores, thresh)
    raw = group_sequences(flags, steps=scores.steps, scores=scores.values)
    pruned = prune(raw, scores.std, theta, lam)
    predictions = np.zeros(length, dtype=bool)
    for seq in pruned:
        predictions[seq.start:seq.end] = True
    return DetectionReport(series_id=series_id, scores=scores, threshold=thresh,
                           sequences_raw=raw, sequences_pruned=pruned,
                           predictions=predictions,
                           timestamps=None if timestamps is None else np.asarray(timestamps))


def detect(model, series: TimeSeries, cfg: DetectConfig | None = None) -> DetectionReport:
    """Score -> threshold -> group -> prune for one series."""
    cfg = cfg or DetectConfig()
    scores = score_series(model, series, cfg.window_size, batch_size=cfg.batch_size)
    return report_from_scores(scores, series_id=series.id, length=len(series),
                              theta=cfg.theta, lam=cfg.lam, timestamps=series.timestamps)


# ---- report text format ----

REPORT_TAG = "imvad-detection-report v1"
_ANOMALY_RE = re.compile(
    r"^anomaly: start=(-?\d+) end=(-?\d+) max_score=(\S+)(?: start_ts=(-?\d+) end_ts=(-?\d+))?$")


def render_report(report: DetectionReport) -> str:
    """Structured text: id, threshold, mean, std, one line per pruned sequence.

    ``start_ts``/``end_ts`` are the timestamps of the first and last member
    steps, present only when the series carries timestamps.
    """
    lines = [REPORT_TAG,
             f"series_id: {report.series_id}",
             f"threshold: {report.threshold!r}",
             f"mean: {report.scores.mean!r}",
             f"std: {report.scores.std!r}"]
    for seq in report.sequences_pruned:
        line = f"anomaly: start={seq.start} end={seq.end} max_score={seq.max_score!r}"
        if report.timestamps is not None:
            line += f" start_ts={int(report.timestamps[seq.start])}" \
                    f" end_ts={int(report.timestamps[seq.end - 1])}"
        lines.append(line)
    return "\n".join(lines) + "\n"


@dataclass
class ParsedReport:
    series_id: str
    threshold: float
    mean: float
    std: float
    sequences: list[tuple[int, int]]


def parse_report(text: str, path=None) -> ParsedReport:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != REPORT_TAG:
        raise FormatError("not a detection report", path=path, line=1)
    fields = {}
    sequences = []
    for idx, ln in enumerate(lines[1:], start=2):
        m = _ANOMALY_RE.match(ln)
        if m:
            sequences.append((int(m.group(1)), int(m.group(2))))
            continue
        if ": " not in ln:
            raise FormatError(f"unparseable report line {ln!r}", path=path, line=idx)
        key, val = ln.split(": ", 1)
        fields[key] = val
    try:
        return ParsedReport(series_id=fields["series_id"], threshold=float(fields["threshold"]),
                            mean=float(fields["mean"]), std=float(fields["std"]),
                            sequences=sequences)
    except (KeyError, ValueError) as exc:
        raise FormatError(f"incomplete detection report: {exc}", path=path) from exc
