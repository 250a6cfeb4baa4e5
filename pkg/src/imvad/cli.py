"""Command-line interface: synth, train, detect, evaluate, benchmark.

Every command writes under a run directory: the effective config, a manifest
recording per-series outcomes, checkpoints, training logs, detection reports,
and evaluation tables. Exit codes: 0 success, 1 usage error, 2 data error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import traceback
from dataclasses import replace

from .config import ARCH_PRESETS, RunConfig, dump_config, load_config
from .detection import detect, parse_report, render_report
from .errors import ImvadError, InvalidInputError, NumericError
from .metrics import aggregate, render_table, report_as_dict, series_f1
from .model import load_checkpoint, save_checkpoint
from .series import impute_missing, load_series
from .synthetic import default_corpus, write_corpus
from .training import LOG_HEADER, fit

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    """Missing or inconsistent command-line options."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p: _Parser):
    p.add_argument("--config", help="INI config file; explicit flags override it")
    p.add_argument("--data", help="series file or dataset directory")
    p.add_argument("--format", choices=["generic_csv", "nab", "nasa"], dest="fmt")
    p.add_argument("--labels", help="label file (CSV for generic/nasa, JSON for nab)")
    p.add_argument("--out", help="run directory")
    p.add_argument("--window-size", type=int)
    p.add_argument("--step", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--epoch-gan", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr-vae", type=float)
    p.add_argument("--lr-gan", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--margin", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--lambda", type=float, dest="lam")
    p.add_argument("--arch-preset", choices=sorted(ARCH_PRESETS))
    p.add_argument("--resume", action="store_true", default=None,
                   help="skip series whose outputs already exist")


def build_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if args.arch_preset:
        cfg.arch_preset = args.arch_preset
        cfg.arch = ARCH_PRESETS[args.arch_preset]
    simple = {"data": "data", "fmt": "format", "labels": "labels", "out": "out",
              "window_size": "window_size", "step": "step", "seed": "seed",
              "theta": "theta", "lam": "lam", "resume": "resume"}
    for arg_name, field in simple.items():
        val = getattr(args, arg_name, None)
        if val is not None:
            setattr(cfg, field, val)
    train_map = {"epochs": "epoch", "epoch_gan": "epoch_gan", "batch_size": "batch_size",
                 "lr_vae": "lr_vae", "lr_gan": "lr_gan", "alpha": "alpha",
                 "beta": "beta", "margin": "margin"}
    overrides = {f: getattr(args, a) for a, f in train_map.items() if getattr(args, a, None) is not None}
    if overrides:
        cfg.train = replace(cfg.train, **overrides)
    cfg.__post_init__()  # re-sync window size and seed into sub-configs
    return cfg


def discover_series(data_path, fmt, labels_path=None) -> list[tuple[str, str]]:
    """(sub_dataset, file path) pairs; sub-dataset is the subdirectory name."""
    if os.path.isfile(data_path):
        return [(os.path.basename(os.path.dirname(os.path.abspath(data_path))) or "dataset", data_path)]
    if not os.path.isdir(data_path):
        raise InvalidInputError(f"no such file or directory: {data_path}")
    dataset_name = os.path.basename(os.path.abspath(data_path).rstrip("/")) or "dataset"
    root = data_path
    # a corpus directory written by `imvad synth` carries data/ + labels.csv
    if os.path.isdir(os.path.join(data_path, "data")) and not _has_csv(data_path):
        root = os.path.join(data_path, "data")
    skip = {os.path.abspath(labels_path)} if labels_path else set()
    pairs = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            if not name.endswith((".csv", ".txt")) or name == "labels.csv":
                continue
            path = os.path.join(dirpath, name)
            if os.path.abspath(path) in skip:
                continue
            rel = os.path.relpath(dirpath, root)
            sub = dataset_name if rel == "." else rel.split(os.sep)[0]
            pairs.append((sub, path))
    if not pairs:
        raise InvalidInputError(f"no series files under {data_path}")
    return pairs


def _has_csv(path) -> bool:
    return any(n.endswith(".csv") for n in os.listdir(path))


def _default_labels(cfg: RunConfig) -> str | None:
    if cfg.labels:
        return cfg.labels
    candidate = os.path.join(cfg.data, "labels.csv")
    if os.path.isdir(cfg.data) and os.path.exists(candidate):
        return candidate
    return None


def _prepare_out(cfg: RunConfig):
    os.makedirs(cfg.out, exist_ok=True)
    dump_config(cfg, os.path.join(cfg.out, "config.ini"))


def _write_manifest(cfg: RunConfig, command: str, entries: dict):
    path = os.path.join(cfg.out, "manifest.json")
    manifest = {}
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    manifest[command] = entries
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)


def _status_exit(entries: dict) -> int:
    states = {e["status"] for e in entries.values()}
    if "numeric-error" in states:
        return EXIT_NUMERIC
    if "error" in states:
        return EXIT_DATA
    return EXIT_OK


def _run_train(cfg: RunConfig) -> dict:
    _prepare_out(cfg)
    ckpt_dir = os.path.join(cfg.out, "checkpoints")
    log_dir = os.path.join(cfg.out, "logs")
    os.makedirs(ckpt_dir, exist_ok=True)
    os.makedirs(log_dir, exist_ok=True)
    labels = _default_labels(cfg)
    entries = {}
    for sub, path in discover_series(cfg.data, cfg.format, labels):
        series_id = os.path.splitext(os.path.basename(path))[0]
        ckpt_path = os.path.join(ckpt_dir, f"{series_id}.pt")
        if cfg.resume and os.path.exists(ckpt_path):
            entries[series_id] = {"status": "skipped", "checkpoint": ckpt_path}
            print(f"train skip {series_id} (checkpoint exists)")
            continue
        t0 = time.time()
        try:
            series = impute_missing(load_series(path, cfg.format, labels), "linear")
            result = fit(series, cfg.train, cfg.arch, step=cfg.step)
            save_checkpoint(result.model, ckpt_path, standardization=result.standardization,
                            extra={"series_id": series_id, "sub_dataset": sub,
                                   "window_count": result.window_count, "seed": cfg.seed})
            log_path = os.path.join(log_dir, f"{series_id}.csv")
            with open(log_path, "w", encoding="utf-8") as fh:
                fh.write(LOG_HEADER + "\n")
                for rec in result.log:
                    fh.write(rec.csv_line() + "\n")
            entries[series_id] = {"status": "ok", "checkpoint": ckpt_path, "log": log_path,
                                  "seconds": round(time.time() - t0, 1)}
            print(f"train ok {series_id} ({result.window_count} windows, "
                  f"{cfg.train.epoch} epochs, {time.time() - t0:.1f}s)")
        except NumericError as exc:
            entries[series_id] = {"status": "numeric-error", "error": str(exc)}
            print(f"train FAILED {series_id}: {exc}", file=sys.stderr)
        except (ImvadError, OSError) as exc:
            entries[series_id] = {"status": "error", "error": str(exc)}
            print(f"train FAILED {series_id}: {exc}", file=sys.stderr)
    _write_manifest(cfg, "train", entries)
    return entries


def cmd_train(args) -> int:
    cfg = build_run_config(args)
    if not cfg.data:
        raise UsageError("--data is required")
    return _status_exit(_run_train(cfg))


def _run_detect(cfg: RunConfig, checkpoints_dir) -> dict:
    _prepare_out(cfg)
    report_dir = os.path.join(cfg.out, "reports")
    os.makedirs(report_dir, exist_ok=True)
    labels = _default_labels(cfg)
    entries = {}
    for sub, path in discover_series(cfg.data, cfg.format, labels):
        series_id = os.path.splitext(os.path.basename(path))[0]
        report_path = os.path.join(report_dir, f"{series_id}.report.txt")
        if cfg.resume and os.path.exists(report_path):
            entries[series_id] = {"status": "skipped", "report": report_path}
            continue
        try:
            ckpt_path = os.path.join(checkpoints_dir, f"{series_id}.pt")
            if not os.path.exists(ckpt_path):
                raise InvalidInputError(f"missing checkpoint {ckpt_path}")
            model, _ = load_checkpoint(ckpt_path)
            if model.config.window_size != cfg.window_size:
                raise InvalidInputError(
                    f"checkpoint window size {model.config.window_size} != configured {cfg.window_size}")
            series = impute_missing(load_series(path, cfg.format, labels), "linear")
            report = detect(model, series, cfg.detect_config())
            with open(report_path, "w", encoding="utf-8") as fh:
                fh.write(render_report(report))
            entries[series_id] = {"status": "ok", "report": report_path,
                                  "sequences": len(report.sequences_pruned)}
            print(f"detect ok {series_id} ({len(report.sequences_pruned)} anomaly sequences)")
        except (ImvadError, OSError) as exc:
            entries[series_id] = {"status": "error", "error": str(exc)}
            print(f"detect FAILED {series_id}: {exc}", file=sys.stderr)
    _write_manifest(cfg, "detect", entries)
    return entries


def cmd_detect(args) -> int:
    cfg = build_run_config(args)
    if not cfg.data:
        raise UsageError("--data is required")
    ckpts = args.checkpoints or os.path.join(cfg.out, "checkpoints")
    return _status_exit(_run_detect(cfg, ckpts))


def _run_evaluate(cfg: RunConfig, reports_dir) -> tuple[dict, int]:
    _prepare_out(cfg)
    labels = _default_labels(cfg)
    per_series: dict[str, list[float]] = {}
    rows = []
    missing = []
    for sub, path in discover_series(cfg.data, cfg.format, labels):
        series_id = os.path.splitext(os.path.basename(path))[0]
        report_path = os.path.join(reports_dir, f"{series_id}.report.txt")
        if not os.path.exists(report_path):
            missing.append(series_id)
            continue
        series = load_series(path, cfg.format, labels)
        with open(report_path, encoding="utf-8") as fh:
            parsed = parse_report(fh.read(), path=report_path)
        score = series_f1(parsed.sequences, series.label_ranges)
        per_series.setdefault(sub, []).append(score)
        rows.append((sub, series_id, score))
    if missing:
        raise InvalidInputError(f"no detection report for series: {', '.join(missing)}")
    if not rows:
        raise InvalidInputError("nothing to evaluate")
    report = aggregate(per_series)
    eval_dir = os.path.join(cfg.out, "eval")
    os.makedirs(eval_dir, exist_ok=True)
    table = render_table(report, name=os.path.basename(cfg.data.rstrip("/")) or "dataset")
    with open(os.path.join(eval_dir, "table.txt"), "w", encoding="utf-8") as fh:
        fh.write(table)
    with open(os.path.join(eval_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report_as_dict(report), fh, indent=2)
    with open(os.path.join(eval_dir, "per_series.csv"), "w", encoding="utf-8") as fh:
        fh.write("sub_dataset,series_id,f1\n")
        for sub, series_id, score in rows:
            fh.write(f"{sub},{series_id},{score!r}\n")
    print(table, end="")
    return {"dataset_mean": report.dataset_mean}, EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = build_run_config(args)
    if not cfg.data:
        raise UsageError("--data is required")
    reports = args.reports or os.path.join(cfg.out, "reports")
    _, code = _run_evaluate(cfg, reports)
    return code


def cmd_benchmark(args) -> int:
    cfg = build_run_config(args)
    if not cfg.data:
        raise UsageError("--data is required")
    train_entries = _run_train(cfg)
    detect_entries = _run_detect(cfg, os.path.join(cfg.out, "checkpoints"))
    _, _ = _run_evaluate(cfg, os.path.join(cfg.out, "reports"))
    for entries in (train_entries, detect_entries):
        code = _status_exit(entries)
        if code != EXIT_OK:
            return code
    return EXIT_OK


def cmd_synth(args) -> int:
    specs = default_corpus(count=args.count, length=args.length, period=args.period,
                           noise_std=args.noise_std, spikes=args.spikes,
                           base_seed=args.seed if args.seed is not None else 0)
    paths = write_corpus(specs, args.out)
    print(f"wrote {len(paths)} series under {args.out}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="imvad", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--length", type=int, default=2000)
    p.add_argument("--period", type=int, default=100)
    p.add_argument("--noise-std", type=float, default=0.05)
    p.add_argument("--spikes", type=int, default=3)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one model per series")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="score series and write detection reports")
    _add_common(p)
    p.add_argument("--checkpoints", help="checkpoint directory (default: <out>/checkpoints)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="overlap F1 of reports against labels")
    _add_common(p)
    p.add_argument("--reports", help="report directory (default: <out>/reports)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="train + detect + evaluate a dataset directory")
    _add_common(p)
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"imvad: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"imvad: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ImvadError, OSError) as exc:
        print(f"imvad: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        traceback.print_exc()
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
