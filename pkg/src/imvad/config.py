"""Run configuration: one flat key-value file with a section per module.

Defaults reproduce the published protocol: window 64, step 1, 50 epochs with
the last 5 adversarial, batch 128, Adamax at 0.001/0.0001, alpha 0.005,
beta 0.1, pruning theta 0.1 and lambda 0.95. ``ARCH_PRESETS`` holds the
full-size network plus the reduced variant used for the synthetic acceptance
corpus and a miniature one for gradient diagnostics.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, replace

from .detection import DetectConfig
from .errors import InvalidConfigurationError
from .model import ArchConfig
from .training import TrainConfig

ARCH_PRESETS: dict[str, ArchConfig] = {
    # flattened latent sizes 512, 256, 128, top group most abstract
    "default": ArchConfig(window_size=64, base_channels=16, max_channels=64,
                          base_resolution=4, cells_per_scale=1,
                          groups=((4, 32), (8, 4), (8, 2))),
    # acceptance-corpus scale: half-resolution trunk, slim widths, and a tight
    # latent bottleneck so anomalous structure cannot ride through the posterior
    "reduced": ArchConfig(window_size=64, base_channels=8, max_channels=32,
                          base_resolution=4, cells_per_scale=1,
                          groups=((4, 2), (8, 1), (8, 1)), stem_stride=2),
    # gradient-check scale
    "mini": ArchConfig(window_size=8, base_channels=2, max_channels=4,
                       base_resolution=1, cells_per_scale=1,
                       groups=((1, 4), (1, 2))),
}


@dataclass
class RunConfig:
    data: str = ""
    format: str = "generic_csv"
    labels: str = ""
    out: str = "runs/out"
    window_size: int = 64
    step: int = 1
    seed: int = 0
    resume: bool = False
    arch_preset: str = "default"
    train: TrainConfig = field(default_factory=TrainConfig)
    arch: ArchConfig = field(default_factory=ArchConfig)
    theta: float = 0.1
    lam: float = 0.95

    def __post_init__(self):
        # the run-level window size and seed are authoritative
        if self.arch.window_size != self.window_size:
            self.arch = replace(self.arch, window_size=self.window_size)
        if self.train.seed != self.seed:
            self.train = replace(self.train, seed=self.seed)

    def detect_config(self) -> DetectConfig:
        return DetectConfig(window_size=self.window_size, theta=self.theta, lam=self.lam,
                            batch_size=self.train.batch_size)


def _groups_to_text(groups) -> str:
    return ",".join(f"{r}x{c}" for r, c in groups)


def _groups_from_text(text: str):
    try:
        return tuple(tuple(int(v) for v in part.split("x")) for part in text.split(","))
    except ValueError:
        raise InvalidConfigurationError(f"cannot parse latent groups {text!r}; expected e.g. 4x32,8x4,8x2")


def to_ini(cfg: RunConfig) -> str:
    parser = configparser.ConfigParser()
    parser["run"] = {
        "data": cfg.data,
        "format": cfg.format,
        "labels": cfg.labels,
        "out": cfg.out,
        "window_size": str(cfg.window_size),
        "step": str(cfg.step),
        "seed": str(cfg.seed),
        "resume": str(cfg.resume).lower(),
        "arch_preset": cfg.arch_preset,
    }
    parser["train"] = {
        "epoch": str(cfg.train.epoch),
        "epoch_gan": str(cfg.train.epoch_gan),
        "batch_size": str(cfg.train.batch_size),
        "lr_vae": repr(cfg.train.lr_vae),
        "lr_gan": repr(cfg.train.lr_gan),
        "alpha": repr(cfg.train.alpha),
        "beta": repr(cfg.train.beta),
        "margin": repr(cfg.train.margin),
    }
    parser["arch"] = {
        "base_channels": str(cfg.arch.base_channels),
        "max_channels": str(cfg.arch.max_channels),
        "base_resolution": str(cfg.arch.base_resolution),
        "cells_per_scale": str(cfg.arch.cells_per_scale),
        "groups": _groups_to_text(cfg.arch.groups),
    }
    parser["detect"] = {"theta": repr(cfg.theta), "lambda": repr(cfg.lam)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def from_ini(text: str) -> RunConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise InvalidConfigurationError(f"bad config file: {exc}") from exc
    cfg = RunConfig()
    run = parser["run"] if parser.has_section("run") else {}
    preset = run.get("arch_preset", cfg.arch_preset)
    if preset not in ARCH_PRESETS:
        raise InvalidConfigurationError(f"unknown arch preset {preset!r}")
    arch = ARCH_PRESETS[preset]
    window_size = int(run.get("window_size", arch.window_size))
    arch_kwargs = dict(window_size=window_size)
    if parser.has_section("arch"):
        sec = parser["arch"]
        for key in ("base_channels", "max_channels", "base_resolution", "cells_per_scale"):
            if key in sec:
                arch_kwargs[key] = sec.getint(key)
        if "groups" in sec:
            arch_kwargs["groups"] = _groups_from_text(sec["groups"])
    arch = replace(arch, **arch_kwargs)
    seed = int(run.get("seed", cfg.seed))
    train_kwargs = dict(seed=seed)
    if parser.has_section("train"):
        sec = parser["train"]
        for key, conv in (("epoch", int), ("epoch_gan", int), ("batch_size", int),
                          ("lr_vae", float), ("lr_gan", float), ("alpha", float),
                          ("beta", float), ("margin", float)):
            if key in sec:
                train_kwargs[key] = conv(sec[key])
    theta, lam = cfg.theta, cfg.lam
    if parser.has_section("detect"):
        theta = parser["detect"].getfloat("theta", theta)
        lam = parser["detect"].getfloat("lambda", lam)
    return RunConfig(
        data=run.get("data", cfg.data),
        format=run.get("format", cfg.format),
        labels=run.get("labels", cfg.labels),
        out=run.get("out", cfg.out),
        window_size=window_size,
        step=int(run.get("step", cfg.step)),
        seed=seed,
        resume=str(run.get("resume", "false")).lower() in ("1", "true", "yes"),
        arch_preset=preset,
        train=TrainConfig(**train_kwargs),
        arch=arch,
        theta=theta,
        lam=lam,
    )


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return from_ini(fh.read())


def dump_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_ini(cfg))
