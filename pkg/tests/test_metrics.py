import pytest
from hypothesis import given, strategies as st

from imvad.errors import InvalidInputError
from imvad.metrics import (OverlapCounts, aggregate, f1, overlap_counts, render_table,
                           series_f1)


def brute_force_counts(predicted, truth):
    """All-pairs point-membership oracle on small integer intervals."""
    def points(iv):
        return set(range(iv[0], iv[1]))

    tp = sum(1 for p in predicted if any(points(p) & points(t) for t in truth))
    fp = sum(1 for p in predicted if not any(points(p) & points(t) for t in truth))
    fn = sum(1 for t in truth if not any(points(p) & points(t) for p in predicted))
    return OverlapCounts(tp=tp, fp=fp, fn=fn)


def test_single_overlap():
    assert overlap_counts([(10, 20)], [(15, 30)]) == OverlapCounts(1, 0, 0)


def test_hit_and_miss():
    assert overlap_counts([(10, 20), (40, 50)], [(15, 30)]) == OverlapCounts(1, 1, 0)


def test_missed_truth():
    assert overlap_counts([], [(0, 5)]) == OverlapCounts(0, 0, 1)


def test_touching_intervals_do_not_overlap():
    # half-open: [0, 5) and [5, 9) share no step
    assert overlap_counts([(0, 5)], [(5, 9)]) == OverlapCounts(0, 1, 1)


def test_one_prediction_covering_two_truths_is_one_tp():
    assert overlap_counts([(0, 100)], [(10, 20), (50, 60)]) == OverlapCounts(1, 0, 0)


def test_two_predictions_on_one_truth_are_two_tps():
    assert overlap_counts([(10, 12), (14, 16)], [(0, 100)]) == OverlapCounts(2, 0, 0)


def test_malformed_interval_rejected():
    with pytest.raises(InvalidInputError):
        overlap_counts([(5, 5)], [])
    with pytest.raises(InvalidInputError):
        overlap_counts([], [(7, 3)])


small_intervals = st.lists(
    st.integers(0, 19).flatmap(lambda s: st.integers(s + 1, 20).map(lambda e: (s, e))),
    min_size=0, max_size=5)


@given(small_intervals, small_intervals)
def test_counts_match_brute_force(predicted, truth):
    assert overlap_counts(predicted, truth) == brute_force_counts(predicted, truth)


@given(small_intervals, small_intervals, st.integers(-1000, 1000))
def test_counts_shift_invariant(predicted, truth, offset):
    shifted_p = [(a + offset, b + offset) for a, b in predicted]
    shifted_t = [(a + offset, b + offset) for a, b in truth]
    assert overlap_counts(predicted, truth) == overlap_counts(shifted_p, shifted_t)


def test_f1_perfect():
    assert f1(OverlapCounts(1, 0, 0)) == 1.0


def test_f1_two_thirds():
    assert f1(OverlapCounts(1, 1, 0)) == pytest.approx(2 / 3)


def test_f1_zero_tp_convention():
    assert f1(OverlapCounts(0, 5, 0)) == 0.0
    assert f1(OverlapCounts(0, 0, 7)) == 0.0
    assert f1(OverlapCounts(0, 0, 0)) == 0.0


@given(st.integers(0, 20), st.integers(0, 20), st.integers(0, 20))
def test_f1_monotone_in_tp(tp, fp, fn):
    assert f1(OverlapCounts(tp + 1, fp, fn)) >= f1(OverlapCounts(tp, fp, fn))


def test_series_f1_composition():
    assert series_f1([(10, 20)], [(15, 30)]) == 1.0


# ---- aggregation ----

def test_aggregate_weighted_mean_nasa():
    # 27 series at 0.595 and 53 at 0.679 combine to 0.651
    report = aggregate({"MSL": [0.595] * 27, "SMAP": [0.679] * 53})
    assert report.sub_means["MSL"] == pytest.approx(0.595)
    assert report.sub_means["SMAP"] == pytest.approx(0.679)
    assert report.dataset_mean == pytest.approx(0.651, abs=0.001)


def test_aggregate_weighted_mean_five_subs():
    counts = {"Art": 6, "AdEx": 5, "AWS": 17, "Traf": 7, "Tweets": 10}
    means = {"Art": 0.626, "AdEx": 0.572, "AWS": 0.692, "Traf": 0.595, "Tweets": 0.628}
    report = aggregate({k: [means[k]] * counts[k] for k in counts})
    # hand-computed weighted mean is 0.6406; the published rounding is 0.639
    expected = sum(counts[k] * means[k] for k in counts) / sum(counts.values())
    assert report.dataset_mean == pytest.approx(expected)
    assert report.dataset_mean == pytest.approx(0.639, abs=0.003)


def test_aggregate_single_sub():
    report = aggregate({"only": [0.25, 0.75]})
    assert report.dataset_mean == pytest.approx(report.sub_means["only"]) == pytest.approx(0.5)


def test_aggregate_counts_tracked():
    report = aggregate({"a": [1.0, 0.0], "b": [0.5]})
    assert report.sub_counts == {"a": 2, "b": 1}
    assert report.dataset_mean == pytest.approx((1.0 + 0.0 + 0.5) / 3)


def test_aggregate_rejects_empty_sub():
    with pytest.raises(InvalidInputError):
        aggregate({"a": []})


@given(st.dictionaries(st.sampled_from(["a", "b", "c"]),
                       st.lists(st.floats(0, 1), min_size=1, max_size=8), min_size=1))
def test_aggregate_invariant(per_series):
    report = aggregate(per_series)
    num = sum(report.sub_counts[s] * report.sub_means[s] for s in per_series)
    den = sum(report.sub_counts.values())
    assert report.dataset_mean == pytest.approx(num / den)


def test_table_layout():
    report = aggregate({"Art": [0.6], "AWS": [0.7, 0.8]})
    table = render_table(report, name="demo")
    lines = table.strip().splitlines()
    assert lines[0].split("\t") == ["model", "Art (n=1)", "AWS (n=2)", "mean"]
    assert lines[1].split("\t")[0] == "demo"
