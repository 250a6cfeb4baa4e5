"""Sequence-overlap F1 and the weighted dataset aggregation, by example."""

from imvad.metrics import aggregate, f1, overlap_counts, render_table

print("one prediction overlapping one truth:")
print(" ", overlap_counts([(10, 20)], [(15, 30)]))

print("a second prediction that hits nothing becomes a false positive:")
counts = overlap_counts([(10, 20), (40, 50)], [(15, 30)])
print(" ", counts, "-> F1 =", round(f1(counts), 4))

print("a truth sequence nothing touches becomes a false negative:")
print(" ", overlap_counts([], [(0, 5)]))

print("\ncounting is per sequence on each side:")
print("  one wide prediction over two truths:", overlap_counts([(0, 100)], [(10, 20), (50, 60)]))
print("  two predictions over one truth:     ", overlap_counts([(10, 12), (14, 16)], [(0, 100)]))

print("\nsub-dataset means combine weighted by series count:")
report = aggregate({
    "MSL": [0.595] * 27,
    "SMAP": [0.679] * 53,
})
print(render_table(report, name="demo"))
print("27 series at 0.595 and 53 at 0.679 -> (27*0.595 + 53*0.679)/80 =",
      round(report.dataset_mean, 4))
