"""Encoding a window as an N x N x 2 image.

Channel 0 is the Gramian Angular Field (summation form): values are rescaled
to [-1, 1], interpreted as cosines of polar angles, and the matrix holds
``cos(phi_i + phi_j)``. Channel 1 is a recurrence plot: pairwise Euclidean
distances between delay-embedded trajectories, which with embedding dimension
``m = 1`` and delay ``tau = 1`` (the defaults used throughout) is simply
``|x_i - x_j|``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, InvalidConfigurationError, InvalidInputError
from .windows import Window

_MAGIC = b"T2I1"


@dataclass(frozen=True)
class EncodedWindow:
    center_k: int
    tensor: np.ndarray  # [N, N, 2], float64


def gaf_rescale(window: np.ndarray) -> np.ndarray:
    """Affinely map a window onto [-1, 1]; a constant window maps to zeros."""
    x = np.asarray(window, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise InvalidInputError("window must be a non-empty 1-D array")
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    return np.clip((2.0 * x - hi - lo) / (hi - lo), -1.0, 1.0)


def gaf_encode(rescaled: np.ndarray) -> np.ndarray:
    """Gramian matrix ``outer(x, x) - outer(sqrt(1-x^2), sqrt(1-x^2))``.

    Equals ``cos(arccos(x_i) + arccos(x_j))`` elementwise for inputs in
    [-1, 1]; the ``1 - x^2`` term is clamped at zero before the square root
    to absorb rounding overshoot.
    """
    x = np.asarray(rescaled, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise InvalidInputError("rescaled window must be a non-empty 1-D array")
    if np.any(np.abs(x) > 1.0 + 1e-9):
        raise InvalidInputError("rescaled values must lie in [-1, 1]")
    comp = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    return np.outer(x, x) - np.outer(comp, comp)


def rp_encode(window: np.ndarray, m: int = 1, tau: int = 1) -> np.ndarray:
    """Distance matrix between trajectories ``(x_i, x_{i+tau}, ..., x_{i+(m-1)tau})``."""
    x = np.asarray(window, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise InvalidInputError("window must be a non-empty 1-D array")
    if m < 1 or tau < 1:
        raise InvalidInputError(f"embedding dimension and delay must be positive, got m={m}, tau={tau}")
    n_traj = x.size - (m - 1) * tau
    if n_traj < 1:
        raise InvalidInputError(
            f"trajectory parameters m={m}, tau={tau} exceed window length {x.size}")
    if m == 1:
        return np.abs(x[:, None] - x[None, :])
    traj = np.stack([x[i:i + n_traj] for i in range(0, m * tau, tau)], axis=1)
    diff = traj[:, None, :] - traj[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def encode_window(window: Window, m: int = 1, tau: int = 1) -> EncodedWindow:
    """Stack the GAF and recurrence-plot channels into an [N, N, 2] tensor."""
    n = len(window)
    gaf = gaf_encode(gaf_rescale(window.values))
    rp = rp_encode(window.values, m, tau)
    if rp.shape != (n, n):
        raise InvalidConfigurationError(
            f"recurrence channel is {rp.shape[0]}x{rp.shape[1]} but the GAF channel is {n}x{n}; "
            f"only m=1, tau=1 produce matching shapes")
    return EncodedWindow(center_k=window.center_k, tensor=np.stack([gaf, rp], axis=-1))


def encode_series_windows(windows) -> np.ndarray:
    """Encode an iterable of windows into one [K, N, N, 2] float32 stack."""
    tensors = [encode_window(win).tensor for win in windows]
    if not tensors:
        raise InvalidInputError("no windows to encode")
    return np.stack(tensors).astype(np.float32)


def save_tensors(path, tensors: np.ndarray) -> None:
    """Cache encoded windows: magic ``T2I1``, uint32-LE N and C, then
    row-major float32 payload. Accepts one [N, N, C] tensor or a stack."""
    arr = np.asarray(tensors, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[1] != arr.shape[2]:
        raise InvalidInputError(f"expected [K, N, N, C] or [N, N, C], got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", arr.shape[1], arr.shape[3]))
        fh.write(np.ascontiguousarray(arr).tobytes())


def load_tensors(path) -> np.ndarray:
    """Read a ``T2I1`` cache back as a [K, N, N, C] float32 stack."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {_MAGIC!r}", path=path)
        n, c = struct.unpack("<II", fh.read(8))
        payload = fh.read()
    frame = n * n * c * 4
    if frame == 0 or len(payload) % frame != 0:
        raise FormatError(f"payload size {len(payload)} is not a multiple of one {n}x{n}x{c} tensor", path=path)
    arr = np.frombuffer(payload, dtype="<f4").reshape(-1, n, n, c)
    return arr.copy()
