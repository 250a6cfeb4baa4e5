"""Labeled synthetic series: a periodic base plus injected anomalies.

Keeps the full pipeline testable without external data. ``generate`` is
deterministic given the spec's seed, and the label ranges are exactly the
injected intervals. The default corpus (ten seeded sines, length 2000,
period 100, noise 0.05, three spikes each at 6-10x the noise scale) is what
the end-to-end acceptance run trains on.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidInputError
from .series import TimeSeries, append_label_csv, write_generic_csv

KINDS = ("spike", "level_shift", "dropout")
BASES = ("sine", "sawtooth", "constant")


@dataclass(frozen=True)
class Anomaly:
    kind: str
    position: int
    magnitude: float
    duration: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown anomaly kind {self.kind!r}")
        if self.duration < 1:
            raise InvalidInputError("anomaly duration must be >= 1")
        if self.magnitude == 0:
            raise InvalidInputError("anomaly magnitude must be nonzero")

    @property
    def interval(self) -> tuple[int, int]:
        return (self.position, self.position + self.duration)


@dataclass(frozen=True)
class SynthSpec:
    length: int = 2000
    base: str = "sine"
    period: int = 100
    noise_std: float = 0.05
    anomalies: tuple[Anomaly, ...] = ()
    seed: int = 0
    id: str = "synthetic"

    def __post_init__(self):
        if self.base not in BASES:
            raise InvalidInputError(f"unknown base waveform {self.base!r}")
        if self.length < 1 or self.period < 1:
            raise InvalidInputError("length and period must be positive")
        if self.noise_std < 0:
            raise InvalidInputError("noise_std must be >= 0")
        object.__setattr__(self, "anomalies", tuple(
            a if isinstance(a, Anomaly) else Anomaly(**a) for a in self.anomalies))
        last_end = 0
        for a in sorted(self.anomalies, key=lambda a: a.position):
            start, end = a.interval
            if start < 0 or end > self.length:
                raise InvalidInputError(f"anomaly interval [{start}, {end}) outside [0, {self.length})")
            if start < last_end:
                raise InvalidInputError(f"overlapping anomaly intervals at [{start}, {end})")
            last_end = end


def base_waveform(spec: SynthSpec) -> np.ndarray:
    t = np.arange(spec.length, dtype=np.float64)
    if spec.base == "sine":
        return np.sin(2.0 * np.pi * t / spec.period)
    if spec.base == "sawtooth":
        return 2.0 * ((t % spec.period) / spec.period) - 1.0
    return np.zeros(spec.length)


def generate(spec: SynthSpec) -> TimeSeries:
    """Base + seeded noise, then anomalies applied over their intervals.

    Spikes and level shifts add the (signed) magnitude; a dropout pins the
    segment at ``-magnitude``, a stuck-low fault.
    """
    rng = np.random.default_rng(spec.seed)
    values = base_waveform(spec)
    if spec.noise_std > 0:
        values = values + rng.normal(0.0, spec.noise_std, size=spec.length)
    for a in spec.anomalies:
        lo, hi = a.interval
        if a.kind in ("spike", "level_shift"):
            values[lo:hi] += a.magnitude
        else:
            values[lo:hi] = -a.magnitude
    labels = sorted(a.interval for a in spec.anomalies)
    return TimeSeries(id=spec.id, values=values, label_ranges=labels)


def default_corpus(count: int = 10, *, length: int = 2000, period: int = 100,
                   noise_std: float = 0.05, spikes: int = 3, base_seed: int = 0,
                   ) -> list[SynthSpec]:
    """The seeded acceptance corpus: sine series with a few isolated spikes.

    Spikes are centered on waveform extremes, point outward (up on peaks,
    down in troughs), and last 4-5 steps. Both choices keep the corpus
    testing the pipeline rather than luck: an in-range or very short spike
    of the same magnitude can sit below the rescaled image encoding's
    noise floor at desk-scale training budgets. Spacing keeps spikes at
    least three periods apart (relaxed for short series).
    """
    specs = []
    for i in range(count):
        rng = np.random.default_rng(base_seed + 1000 + i)
        margin = min(200, max(10, length // 5))
        candidates = [p for p in range(period // 4, length - max(margin, 6), period // 2)
                      if p >= margin]
        if len(candidates) < spikes:
            raise InvalidInputError(
                f"series of length {length} is too short for {spikes} spikes")
        order = rng.permutation(len(candidates))
        min_gap = 3 * period
        positions: list[int] = []
        while len(positions) < spikes:
            positions = []
            for idx in order:
                p = candidates[idx]
                if all(abs(p - q) >= min_gap for q in positions):
                    positions.append(p)
                if len(positions) == spikes:
                    break
            min_gap = max(1, min_gap // 2)  # relax spacing if the series is short
        anomalies = []
        for p in sorted(positions):
            magnitude = float(rng.uniform(6.0, 10.0)) * noise_std
            on_peak = (p - period // 4) % period == 0
            duration = int(rng.integers(4, 6))
            anomalies.append(Anomaly(kind="spike", position=p - duration // 2,
                                     magnitude=magnitude if on_peak else -magnitude,
                                     duration=duration))
        specs.append(SynthSpec(length=length, base="sine", period=period, noise_std=noise_std,
                               anomalies=tuple(anomalies), seed=base_seed + i,
                               id=f"synthetic_{i:02d}"))
    return specs


def write_corpus(specs: list[SynthSpec], out_dir) -> list[str]:
    """Write each series as generic_csv plus one shared half-open label CSV.

    Also drops ``corpus.json`` recording every spec, so a run is reproducible
    from the written directory alone.
    """
    os.makedirs(out_dir, exist_ok=True)
    data_dir = os.path.join(out_dir, "data")
    os.makedirs(data_dir, exist_ok=True)
    labels_path = os.path.join(out_dir, "labels.csv")
    if os.path.exists(labels_path):
        os.remove(labels_path)
    paths = []
    for spec in specs:
        series = generate(spec)
        path = os.path.join(data_dir, f"{series.id}.csv")
        write_generic_csv(series, path)
        append_label_csv(series, labels_path)
        paths.append(path)
    with open(os.path.join(out_dir, "corpus.json"), "w", encoding="utf-8") as fh:
        json.dump({"specs": [asdict(s) for s in specs]}, fh, indent=2)
    return paths
