"""Thresholding, grouping, and pruning on hand-made score vectors.

No model involved: stub scores make the decision rules easy to follow.
"""

import numpy as np

from imvad.detection import ScoreSeries, group_sequences, prune, report_from_scores, threshold

# ten scores, one outlier: population std is 3, so the threshold lands at 7
scores = ScoreSeries(steps=np.arange(10), values=np.array([0.0] * 9 + [10.0]))
print(f"scores: {scores.values}")
print(f"mean={scores.mean}, std={scores.std}, threshold={threshold(scores)}")
print("flagged steps:", np.nonzero(scores.values > threshold(scores))[0])

# run-length grouping
flags = [True, True, False, False, True]
print("\nflags:", flags)
print("sequences:", [(s.start, s.end) for s in group_sequences(flags)])

# the descent-rate pruning rule: maxima 10, 9.3, 2 with std 3
from imvad.detection import AnomalySequence

seqs = [AnomalySequence(0, 2, 10.0), AnomalySequence(5, 7, 9.3), AnomalySequence(9, 10, 2.0)]
kept = prune(seqs, std=3.0)
print("\nmaxima [10, 9.3, 2], std 3:")
print("  p_2 = (10-9.3)/9.3 = %.4f < 0.1, 9.3 < 4*std and < 0.95*10" % ((10 - 9.3) / 9.3))
print("  -> prune from rank 2 on; kept:", [(s.start, s.end) for s in kept])

seqs = [AnomalySequence(0, 2, 10.0), AnomalySequence(5, 7, 9.5), AnomalySequence(9, 10, 3.0)]
kept = prune(seqs, std=2.0)
print("maxima [10, 9.5, 3], std 2: 9.5 >= 4*std=8 -> nothing pruned; kept:",
      [(s.start, s.end) for s in kept])

# a full report from stub scores
rng = np.random.default_rng(1)
values = rng.gamma(1.0, 1.0, 400)
values[100:104] += 30
values[250] += 25
report = report_from_scores(ScoreSeries(steps=np.arange(400), values=values),
                            series_id="stub", length=420)
print("\nstub report: threshold=%.2f" % report.threshold)
print("raw sequences:   ", [(s.start, s.end) for s in report.sequences_raw])
print("pruned sequences:", [(s.start, s.end) for s in report.sequences_pruned])
print("flagged steps outside the scorable range are always reported normal.")
