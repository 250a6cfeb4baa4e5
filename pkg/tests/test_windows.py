import numpy as np
import pytest
from hypothesis import given, strategies as st

from imvad.errors import InvalidInputError, OutOfRangeError
from imvad.series import TimeSeries
from imvad.windows import extract_window, iter_windows, scorable_range


def make(length):
    return TimeSeries(id="t", values=np.arange(length, dtype=float))


def brute_force_window_count(length, N, step=1):
    # oracle: scan every start offset and count full windows
    count = 0
    starts = []
    for start in range(0, length):
        if start + N <= length:
            starts.append(start)
    return len(starts[::step])


def test_extract_center_example():
    win = extract_window(make(10), k=4, N=4)
    np.testing.assert_array_equal(win.values, [3, 4, 5, 6])
    assert win.center_k == 4


def test_window_count_art_scale():
    length, N = 4032, 64
    assert brute_force_window_count(length, N) == 3969
    assert len(scorable_range(length, N)) == 3969


def test_boundary_rejected():
    # with w = 2 the first admissible step is k = 1
    with pytest.raises(OutOfRangeError):
        extract_window(make(10), k=0, N=4)
    with pytest.raises(OutOfRangeError):
        extract_window(make(10), k=8, N=4)
    extract_window(make(10), k=1, N=4)
    extract_window(make(10), k=7, N=4)


def test_odd_or_nonpositive_size_rejected():
    with pytest.raises(InvalidInputError):
        extract_window(make(10), k=3, N=3)
    with pytest.raises(InvalidInputError):
        extract_window(make(10), k=3, N=0)


def test_single_window_when_length_equals_size():
    wins = list(iter_windows(make(64), N=64))
    assert len(wins) == 1
    np.testing.assert_array_equal(wins[0].values, np.arange(64))


def test_iter_count_matches_enumeration():
    wins = list(iter_windows(make(100), N=64, step=1))
    assert len(wins) == brute_force_window_count(100, 64) == 37


def test_step_strides_every_other():
    all_ks = [w.center_k for w in iter_windows(make(30), N=8, step=1)]
    strided = [w.center_k for w in iter_windows(make(30), N=8, step=2)]
    assert strided == all_ks[::2]


def test_too_short_series_rejected():
    with pytest.raises(InvalidInputError):
        list(iter_windows(make(10), N=16))
    with pytest.raises(InvalidInputError):
        iter_windows(make(10), N=4, step=0).__next__()


@given(st.integers(2, 40).map(lambda w: 2 * w), st.integers(0, 60))
def test_window_count_invariant(N, extra):
    length = N + extra
    assert len(list(iter_windows(make(length), N))) == length - N + 1


@given(st.integers(1, 12).map(lambda w: 2 * w), st.integers(0, 30))
def test_window_values_match_series_slice(N, extra):
    length = N + extra
    series = TimeSeries(id="t", values=np.random.default_rng(0).normal(size=length))
    w = N // 2
    for win in iter_windows(series, N):
        k = win.center_k
        for i in range(N):
            assert win.values[i] == series.values[k - w + 1 + i]
