"""Loading, cleaning, and standardizing univariate time series.

Canonical in-memory form is :class:`TimeSeries`: a float array of values,
optional integer timestamps (epoch seconds, reporting only), and optional
half-open ``[start, end)`` index ranges marking known anomaly sequences.
Three on-disk layouts are supported:

* ``generic_csv`` -- header ``value`` or ``timestamp,value``, one row per step;
  optional companion label CSV ``series_id,start_index,end_index`` with
  half-open ranges.
* ``nab`` -- ``timestamp,value`` rows with datetime or epoch timestamps;
  labels as a JSON map from file name to ``[start_ts, end_ts]`` pairs,
  matched against row timestamps (both bounds inclusive).
* ``nasa`` -- one value column per file (optional ``value`` header); labels
  as CSV ``series_id,start_index,end_index`` rows whose end index is
  inclusive in the file and converted to half-open on load.

Missing values are an empty field or a ``NaN`` literal and must be imputed
before windowing.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

import numpy as np

from .errors import FormatError, InvalidInputError

_TS_FORMATS = ("%Y-%m-%d %H:%M:%S.%f", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d")


@dataclass
class TimeSeries:
    """A univariate series with optional timestamps and anomaly labels."""

    id: str
    values: np.ndarray
    timestamps: np.ndarray | None = None
    label_ranges: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or len(self.values) < 1:
            raise InvalidInputError(f"series {self.id!r} must hold a non-empty 1-D value array")
        if self.timestamps is not None:
            self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
            if self.timestamps.shape != self.values.shape:
                raise InvalidInputError(f"series {self.id!r}: timestamps length differs from values")
            if len(self.timestamps) > 1 and not np.all(np.diff(self.timestamps) > 0):
                raise InvalidInputError(f"series {self.id!r}: timestamps must be strictly increasing")
        self.label_ranges = [(int(s), int(e)) for s, e in self.label_ranges]
        self.label_ranges.sort()
        last_end = 0
        for s, e in self.label_ranges:
            if not (0 <= s < e <= len(self.values)):
                raise InvalidInputError(f"series {self.id!r}: label range [{s}, {e}) outside [0, {len(self.values)})")
            if s < last_end:
                raise InvalidInputError(f"series {self.id!r}: overlapping label ranges at [{s}, {e})")
            last_end = e

    def __len__(self):
        return len(self.values)

    @property
    def has_missing(self) -> bool:
        return bool(np.isnan(self.values).any())


@dataclass(frozen=True)
class StandardizationParams:
    """Affine transform ``z = (x - mean) / std`` recorded for inversion."""

    mean: float
    std: float

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def invert(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean


def _parse_timestamp(text: str, path, line) -> int:
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(text)
    except ValueError:
        dt = None
    if dt is None:
        for fmt in _TS_FORMATS:
            try:
                dt = datetime.strptime(text, fmt)
                break
            except ValueError:
                continue
    if dt is None:
        raise FormatError(f"unparseable timestamp {text!r}", path=path, line=line)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _parse_value(text: str, path, line) -> float:
    text = text.strip()
    if text == "":
        return math.nan
    try:
        return float(text)  # accepts the NaN literal in any case
    except ValueError:
        raise FormatError(f"unparseable value {text!r}", path=path, line=line) from None


def _read_rows(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.reader(fh))
    except OSError as exc:
        raise FormatError(f"cannot read file: {exc}", path=path) from exc


def _series_id(path) -> str:
    return os.path.splitext(os.path.basename(str(path)))[0]


def _load_generic_csv(path) -> TimeSeries:
    rows = _read_rows(path)
    if not rows:
        raise InvalidInputError(f"empty series file: {path}")
    header = [c.strip().lower() for c in rows[0]]
    if header == ["value"]:
        ts_col, val_col = None, 0
    elif header == ["timestamp", "value"]:
        ts_col, val_col = 0, 1
    else:
        raise FormatError(f"expected header 'value' or 'timestamp,value', got {rows[0]!r}", path=path, line=1)
    values, stamps = [], []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            if ts_col is None:
                values.append(math.nan)  # an empty line is the single field, empty
            continue
        if len(row) != len(header):
            raise FormatError(f"expected {len(header)} columns, got {len(row)}", path=path, line=i)
        values.append(_parse_value(row[val_col], path, i))
        if ts_col is not None:
            stamps.append(_parse_timestamp(row[ts_col], path, i))
    if not values:
        raise InvalidInputError(f"empty series file: {path}")
    return TimeSeries(id=_series_id(path), values=np.array(values),
                      timestamps=np.array(stamps) if stamps else None)


def _load_nab_csv(path) -> TimeSeries:
    rows = _read_rows(path)
    if not rows:
        raise InvalidInputError(f"empty series file: {path}")
    header = [c.strip().lower() for c in rows[0]]
    if header[:2] != ["timestamp", "value"]:
        raise FormatError(f"expected header 'timestamp,value', got {rows[0]!r}", path=path, line=1)
    values, stamps = [], []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) < 2:
            raise FormatError("expected 'timestamp,value' row", path=path, line=i)
        stamps.append(_parse_timestamp(row[0], path, i))
        values.append(_parse_value(row[1], path, i))
    if not values:
        raise InvalidInputError(f"empty series file: {path}")
    return TimeSeries(id=_series_id(path), values=np.array(values), timestamps=np.array(stamps))


def _load_nasa_file(path) -> TimeSeries:
    rows = _read_rows(path)
    values = []
    start = 1 if rows and [c.strip().lower() for c in rows[0]] == ["value"] else 0
    for i, row in enumerate(rows[start:], start=start + 1):
        if not row:
            values.append(math.nan)
            continue
        if len(row) != 1:
            raise FormatError(f"expected one value column, got {len(row)}", path=path, line=i)
        values.append(_parse_value(row[0], path, i))
    if not values:
        raise InvalidInputError(f"empty series file: {path}")
    return TimeSeries(id=_series_id(path), values=np.array(values))


def load_label_csv(path, series_id: str, *, inclusive_end: bool = False) -> list[tuple[int, int]]:
    """Read ``series_id,start_index,end_index`` label rows for one series."""
    rows = _read_rows(path)
    ranges = []
    for i, row in enumerate(rows, start=1):
        if not row or (i == 1 and [c.strip().lower() for c in row] == ["series_id", "start_index", "end_index"]):
            continue
        if len(row) != 3:
            raise FormatError(f"expected 'series_id,start_index,end_index', got {len(row)} columns", path=path, line=i)
        if row[0].strip() != series_id:
            continue
        try:
            start, end = int(row[1]), int(row[2])
        except ValueError:
            raise FormatError(f"non-integer label index in {row!r}", path=path, line=i) from None
        ranges.append((start, end + 1 if inclusive_end else end))
    return ranges


def _nab_ranges(labels_path, data_path, timestamps) -> list[tuple[int, int]]:
    try:
        with open(labels_path, encoding="utf-8") as fh:
            table = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot parse NAB label JSON: {exc}", path=labels_path) from exc
    name = os.path.basename(str(data_path))
    windows = None
    for key, val in table.items():
        # NAB keys carry the sub-dataset prefix, e.g. "artificialWithAnomaly/art_daily_jumpsdown.csv"
        if key == name or key.endswith("/" + name):
            windows = val
            break
    if windows is None:
        return []
    ranges = []
    for pair in windows:
        if len(pair) != 2:
            raise FormatError(f"label window {pair!r} is not a [start, end] pair", path=labels_path)
        lo = _parse_timestamp(str(pair[0]), labels_path, None)
        hi = _parse_timestamp(str(pair[1]), labels_path, None)
        idx = np.nonzero((timestamps >= lo) & (timestamps <= hi))[0]
        if idx.size:
            ranges.append((int(idx[0]), int(idx[-1]) + 1))
    return ranges


def load_series(path, format: str, labels_path=None) -> TimeSeries:
    """Load one series under the named format, attaching labels when given.

    ``format`` is one of ``generic_csv``, ``nab``, ``nasa``. Values are kept
    in file order; missing entries come back as NaN and should be run through
    :func:`impute_missing`.
    """
    if format == "generic_csv":
        series = _load_generic_csv(path)
        if labels_path is not None:
            series.label_ranges = load_label_csv(labels_path, series.id)
    elif format == "nab":
        series = _load_nab_csv(path)
        if labels_path is not None:
            series.label_ranges = _nab_ranges(labels_path, path, series.timestamps)
    elif format == "nasa":
        series = _load_nasa_file(path)
        if labels_path is not None:
            series.label_ranges = load_label_csv(labels_path, series.id, inclusive_end=True)
    else:
        raise InvalidInputError(f"unknown format {format!r}")
    return TimeSeries(id=series.id, values=series.values, timestamps=series.timestamps,
                      label_ranges=series.label_ranges)


def impute_missing(series: TimeSeries, policy: str = "linear") -> TimeSeries:
    """Fill NaN entries; ``linear`` interpolates, ``ffill`` carries forward.

    Boundary gaps copy the nearest present value under both policies.
    """
    values = series.values
    missing = np.isnan(values)
    if not missing.any():
        return series
    present = np.nonzero(~missing)[0]
    if present.size == 0:
        raise InvalidInputError(f"series {series.id!r} has no observed values to impute from")
    filled = values.copy()
    if policy == "linear":
        filled[missing] = np.interp(np.nonzero(missing)[0], present, values[present])
    elif policy == "ffill":
        # carry the last present value forward; the leading gap copies the first
        last = np.maximum.accumulate(np.where(missing, -1, np.arange(len(values))))
        last[last < 0] = present[0]
        filled = values[last]
    else:
        raise InvalidInputError(f"unknown imputation policy {policy!r}")
    return replace(series, values=filled)


def standardize(series: TimeSeries) -> tuple[TimeSeries, StandardizationParams]:
    """Z-score the series over its full length (population std).

    A constant series gets std 1 so the output is all zeros rather than
    dividing by zero.
    """
    if series.has_missing:
        raise InvalidInputError(f"series {series.id!r} still has missing values; impute first")
    mean = float(series.values.mean())
    std = float(series.values.std())
    if std == 0.0:
        std = 1.0
    params = StandardizationParams(mean=mean, std=std)
    return replace(series, values=params.apply(series.values)), params


def invert_standardize(series: TimeSeries, params: StandardizationParams) -> TimeSeries:
    return replace(series, values=params.invert(series.values))


def write_generic_csv(series: TimeSeries, path) -> None:
    """Write a series in the ``generic_csv`` layout."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if series.timestamps is not None:
            writer.writerow(["timestamp", "value"])
            for ts, v in zip(series.timestamps, series.values):
                writer.writerow([int(ts), repr(float(v))])
        else:
            writer.writerow(["value"])
            for v in series.values:
                writer.writerow([repr(float(v))])


def append_label_csv(series: TimeSeries, path) -> None:
    """Append this series' half-open label ranges to a companion label CSV."""
    new_file = not os.path.exists(path)
    with open(path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(["series_id", "start_index", "end_index"])
        for start, end in series.label_ranges:
            writer.writerow([series.id, start, end])
