"""End-to-end miniature run: synthesize, train, detect, evaluate.

Uses a short series and a 32-step window so it finishes in about a minute
on a laptop CPU. The acceptance-scale corpus runs through the same code
with the full defaults (window 64, 45+5 epochs).
"""

import time

from imvad.detection import DetectConfig, detect
from imvad.metrics import overlap_counts, series_f1
from imvad.model import ArchConfig
from imvad.synthetic import default_corpus, generate
from imvad.training import TrainConfig, fit

arch = ArchConfig(window_size=32, base_channels=4, max_channels=16,
                  base_resolution=4, cells_per_scale=1, groups=((4, 2), (8, 1)),
                  stem_stride=2)
cfg = TrainConfig(epoch=40, epoch_gan=4, batch_size=64, seed=0)

spec = default_corpus(count=1, length=600, period=50, noise_std=0.05)[0]
series = generate(spec)
print(f"series {series.id}: {len(series)} steps, labels {series.label_ranges}")

t0 = time.time()
result = fit(series, cfg, arch)
print(f"trained {cfg.epoch} epochs ({cfg.epoch_gan} adversarial) in {time.time() - t0:.0f}s")
for rec in result.log[:: max(1, len(result.log) // 5)]:
    extra = "" if rec.d_loss is None else f" d={rec.d_loss:.2f} g={rec.g_loss:.2f}"
    print(f"  epoch {rec.epoch:2d} [{rec.phase}] recon={rec.recon:8.2f} kl={rec.kl:6.2f}{extra}")

report = detect(result.model, series, DetectConfig(window_size=32))
print(f"\nthreshold {report.threshold:.2f} over {len(report.scores.values)} scorable steps")
print("detected sequences:", [(s.start, s.end) for s in report.sequences_pruned])

predicted = [(s.start, s.end) for s in report.sequences_pruned]
print("overlap counts:", overlap_counts(predicted, series.label_ranges))
print("overlap F1:", round(series_f1(predicted, series.label_ranges), 3))
