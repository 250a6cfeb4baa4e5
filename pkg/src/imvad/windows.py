"""Fixed-length sliding windows centered on scorable time steps.

A window of even size ``N = 2*w`` around 0-based step ``k`` covers indices
``[k-w+1, k+w]``, so full windows exist for ``k`` in ``[w-1, L-w-1]``. The
first ``w-1`` and last ``w`` steps never admit a full window and are treated
as non-anomalous downstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import InvalidInputError, OutOfRangeError
from .series import TimeSeries


@dataclass(frozen=True)
class Window:
    center_k: int
    values: np.ndarray

    def __len__(self):
        return len(self.values)


def _check_size(N: int) -> int:
    if N <= 0 or N % 2 != 0:
        raise InvalidInputError(f"window size must be a positive even integer, got {N}")
    return N // 2


def scorable_range(length: int, N: int) -> range:
    """All 0-based steps of a length-``length`` series that admit a full window."""
    w = _check_size(N)
    if length < N:
        raise InvalidInputError(f"series length {length} is shorter than window size {N}")
    return range(w - 1, length - w)


def extract_window(series: TimeSeries, k: int, N: int) -> Window:
    """The ``N`` values ending ``w`` steps after ``k``; no padding is applied."""
    w = _check_size(N)
    L = len(series)
    if not (w - 1 <= k <= L - w - 1):
        raise OutOfRangeError(
            f"step {k} does not admit a full window of size {N} on a length-{L} series "
            f"(needs {w - 1} <= k <= {L - w - 1})")
    return Window(center_k=k, values=series.values[k - w + 1:k + w + 1])


def iter_windows(series: TimeSeries, N: int, step: int = 1) -> Iterator[Window]:
    """Yield windows at every ``step``-th admissible ``k``, in increasing order."""
    if step <= 0:
        raise InvalidInputError(f"step must be positive, got {step}")
    for k in scorable_range(len(series), N)[::step]:
        yield extract_window(series, k, N)
