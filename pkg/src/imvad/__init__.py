"""Univariate time-series anomaly detection via image-encoded windows.

Pipeline: standardize a series, slide a window over it, encode each window
as a two-channel image (Gramian angular field + recurrence plot), train a
hierarchical VAE (optionally with adversarial fine-tuning) to reconstruct
the images, score each step by reconstruction error, and flag steps whose
score exceeds an adaptive threshold, with sequence-level pruning. A
sequence-overlap F1 evaluator compares detections against labeled ranges.
"""

from .detection import (AnomalySequence, DetectConfig, DetectionReport, ScoreSeries, detect,
                        group_sequences, prune, report_from_scores, score_series, threshold)
from .errors import (FormatError, ImvadError, InvalidConfigurationError, InvalidInputError,
                     NumericError, OutOfRangeError)
from .imaging import (EncodedWindow, encode_series_windows, encode_window, gaf_encode,
                      gaf_rescale, load_tensors, rp_encode, save_tensors)
from .metrics import (EvalReport, OverlapCounts, aggregate, f1, overlap_counts, series_f1)
from .model import (ArchConfig, GroupDistribution, HVAE, LatentState, build_model, elbo_loss,
                    kl_total, kl_variable, load_checkpoint, recon_loss, save_checkpoint)
from .series import (StandardizationParams, TimeSeries, impute_missing, invert_standardize,
                     load_series, standardize)
from .synthetic import Anomaly, SynthSpec, default_corpus, generate, write_corpus
from .training import (Adamax, EpochRecord, FitResult, TrainConfig, adversarial_step, fit,
                       train_adversarial_phase, train_vae_phase)
from .windows import Window, extract_window, iter_windows, scorable_range

__version__ = "0.1.0"
