"""Caching encoded windows in the binary tensor container."""

import os
import tempfile

import numpy as np

from imvad.imaging import encode_series_windows, load_tensors, save_tensors
from imvad.series import TimeSeries, standardize
from imvad.windows import iter_windows

rng = np.random.default_rng(3)
series = TimeSeries(id="cache-demo", values=np.sin(np.arange(200) / 7) + rng.normal(0, 0.1, 200))
std_series, _ = standardize(series)

stack = encode_series_windows(iter_windows(std_series, N=32, step=1))
print("encoded stack:", stack.shape, stack.dtype)

path = os.path.join(tempfile.mkdtemp(), "windows.t2i")
save_tensors(path, stack)
size = os.path.getsize(path)
print(f"wrote {path}: {size} bytes "
      f"(12-byte header + {stack.size} float32 values)")

back = load_tensors(path)
print("read back:", back.shape, "bitwise equal:", np.array_equal(back, stack))

with open(path, "rb") as fh:
    header = fh.read(12)
print("magic:", header[:4], " N:", int.from_bytes(header[4:8], "little"),
      " C:", int.from_bytes(header[8:12], "little"))
