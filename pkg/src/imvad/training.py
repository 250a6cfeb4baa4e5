"""Two-phase training: joint ELBO optimization, then adversarial fine-tuning.

The first ``epoch - epoch_gan`` epochs update encoder and decoder jointly on
``L = L_r + L_KL``. The remaining ``epoch_gan`` epochs treat the encoder as a
discriminator and the decoder as a generator: per batch, the encoder is
stepped on

    L_d = L_r + beta * L_KL(real) + alpha * [m - L_KL(rec)]+ + alpha * [m - L_KL(gen)]+

where the reconstructed and prior-generated inputs are gradient-stopped, and
the decoder is stepped on

    L_g = L_r + alpha * L_KL(rec) + alpha * L_KL(gen)

with gradients flowing through the decoder outputs. Both losses' gradients
are evaluated at the pre-update parameters; the encoder steps first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import torch

from .errors import InvalidInputError, NumericError
from .imaging import encode_series_windows
from .model import ArchConfig, HVAE, build_model, kl_total, recon_loss
from .series import StandardizationParams, TimeSeries, impute_missing, standardize
from .windows import iter_windows


@dataclass(frozen=True)
class TrainConfig:
    epoch: int = 50
    epoch_gan: int = 5
    batch_size: int = 128
    lr_vae: float = 0.001
    lr_gan: float = 0.0001
    alpha: float = 0.005
    beta: float = 0.1
    margin: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.epoch_gan <= self.epoch:
            raise InvalidInputError(f"need 0 <= epoch_gan <= epoch, got {self.epoch_gan} / {self.epoch}")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be >= 1")
        for name in ("lr_vae", "lr_gan", "margin"):
            if getattr(self, name) <= 0:
                raise InvalidInputError(f"{name} must be positive")
        # zero weights are legal (they gate the adversarial terms off)
        if self.alpha < 0 or self.beta < 0:
            raise InvalidInputError("alpha and beta must be nonnegative")


@dataclass
class EpochRecord:
    epoch: int
    phase: str  # "vae" | "gan"
    recon: float
    kl: float
    d_loss: float | None = None
    g_loss: float | None = None

    def csv_line(self) -> str:
        def fmt(v):
            return "" if v is None else repr(float(v))

        return ",".join([str(self.epoch), self.phase, fmt(self.recon), fmt(self.kl),
                         fmt(self.d_loss), fmt(self.g_loss)])


LOG_HEADER = "epoch,phase,mean_recon,mean_kl,mean_d,mean_g"


class Adamax(torch.optim.Optimizer):
    """Adamax with the infinity-norm update ``u_t = max(beta2 * u_{t-1}, |g_t|)``.

    The step is ``theta -= lr / (1 - beta1^t) * m_t / (u_t + eps)``; eps sits
    outside the max so the update matches the textbook recursion exactly.
    """

    def __init__(self, params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        super().__init__(params, dict(lr=lr, betas=betas, eps=eps))

    @torch.no_grad()
    def step(self, closure=None):
        for group in self.param_groups:
            beta1, beta2 = group["betas"]
            for p in group["params"]:
                if p.grad is None:
                    continue
                state = self.state[p]
                if not state:
                    state["t"] = 0
                    state["m"] = torch.zeros_like(p)
                    state["u"] = torch.zeros_like(p)
                state["t"] += 1
                m, u = state["m"], state["u"]
                m.mul_(beta1).add_(p.grad, alpha=1.0 - beta1)
                torch.maximum(u.mul_(beta2), p.grad.abs(), out=u)
                step_size = group["lr"] / (1.0 - beta1 ** state["t"])
                p.addcdiv_(m, u + group["eps"], value=-step_size)


def to_training_batch(encoded: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    """Channels-last [K, N, N, C] numpy stack to a [K, C, N, N] tensor."""
    arr = np.asarray(encoded)
    if arr.ndim != 4:
        raise InvalidInputError(f"expected [K, N, N, C], got shape {arr.shape}")
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2))).to(dtype)


def prepare_training_data(series: TimeSeries, window_size: int, step: int = 1,
                          ) -> tuple[torch.Tensor, StandardizationParams]:
    """Standardize, window, and encode a series into a training tensor."""
    if series.has_missing:
        series = impute_missing(series, "linear")
    std_series, params = standardize(series)
    encoded = encode_series_windows(iter_windows(std_series, window_size, step))
    return to_training_batch(encoded), params


def _minibatches(data: torch.Tensor, batch_size: int,
                 generator: torch.Generator | None) -> Iterable[torch.Tensor]:
    perm = torch.randperm(data.shape[0], generator=generator)
    for i in range(0, data.shape[0], batch_size):
        yield data[perm[i:i + batch_size]]


def _scalar(value) -> float:
    return float(value.detach()) if torch.is_tensor(value) else float(value)


def _require_finite(epoch, batch, **parts):
    for value in parts.values():
        if not torch.isfinite(torch.as_tensor(value)).all():
            raise NumericError("non-finite training loss", epoch=epoch, batch=batch,
                               parts={k: _scalar(v) for k, v in parts.items()})


def train_vae_phase(model: HVAE, data: torch.Tensor, cfg: TrainConfig, *,
                    generator: torch.Generator | None = None,
                    records: list[EpochRecord] | None = None) -> HVAE:
    """Joint encoder/decoder updates on ``L_r + L_KL`` for the VAE epochs."""
    if data.shape[0] == 0:
        raise InvalidInputError("no training windows")
    if generator is None:
        generator = torch.Generator()
        generator.manual_seed(cfg.seed)
    opt = Adamax(model.parameters(), lr=cfg.lr_vae)
    n = data.shape[0]
    for epoch in range(1, cfg.epoch - cfg.epoch_gan + 1):
        recon_sum = kl_sum = 0.0
        for i, batch in enumerate(_minibatches(data, cfg.batch_size, generator)):
            state, x_hat = model(batch, sample=True, generator=generator)
            l_r = recon_loss(batch, x_hat)
            l_kl = kl_total(state)
            loss = l_r + l_kl
            _require_finite(epoch, i, recon=l_r, kl=l_kl)
            opt.zero_grad()
            loss.backward()
            opt.step()
            recon_sum += _scalar(l_r)
            kl_sum += _scalar(l_kl)
        if records is not None:
            records.append(EpochRecord(epoch=epoch, phase="vae", recon=recon_sum / n, kl=kl_sum / n))
    return model


def discriminator_loss(model: HVAE, x, x_hat, x_p, state, cfg: TrainConfig, *,
                       generator: torch.Generator | None = None,
                       hinge_inputs: tuple[torch.Tensor, torch.Tensor] | None = None):
    """Encoder objective; reconstructed/generated inputs are gradient-stopped.

    ``hinge_inputs`` overrides the stop-gradient tensors (gradient diagnostics
    freeze them at a base point; by default they are the detached live ones).
    """
    if hinge_inputs is None:
        hinge_inputs = (x_hat.detach(), x_p.detach())
    l_r = recon_loss(x, x_hat)
    kl_real = kl_total(state)
    kl_rec = kl_total(model.encode(hinge_inputs[0], sample=True, generator=generator))
    kl_gen = kl_total(model.encode(hinge_inputs[1], sample=True, generator=generator))
    hinge_rec = torch.clamp(cfg.margin - kl_rec, min=0.0)
    hinge_gen = torch.clamp(cfg.margin - kl_gen, min=0.0)
    loss = l_r + cfg.beta * kl_real + cfg.alpha * hinge_rec + cfg.alpha * hinge_gen
    parts = dict(recon=_scalar(l_r), kl_real=_scalar(kl_real), kl_rec=_scalar(kl_rec),
                 kl_gen=_scalar(kl_gen), hinge_rec=_scalar(hinge_rec), hinge_gen=_scalar(hinge_gen))
    return loss, parts


def generator_loss(model: HVAE, x, x_hat, x_p, cfg: TrainConfig, *,
                   generator: torch.Generator | None = None):
    """Decoder objective; KL terms backpropagate through the decoder outputs."""
    l_r = recon_loss(x, x_hat)
    kl_rec = kl_total(model.encode(x_hat, sample=True, generator=generator))
    kl_gen = kl_total(model.encode(x_p, sample=True, generator=generator))
    loss = l_r + cfg.alpha * kl_rec + cfg.alpha * kl_gen
    return loss, dict(recon=_scalar(l_r), kl_rec=_scalar(kl_rec), kl_gen=_scalar(kl_gen))


def adversarial_step(model: HVAE, batch: torch.Tensor, cfg: TrainConfig,
                     enc_opt: Adamax, dec_opt: Adamax, *,
                     generator: torch.Generator | None = None,
                     epoch: int | None = None, batch_index: int | None = None):
    """One adversarial mini-batch: encoder update on L_d, decoder on L_g.

    All loss terms and both gradients are computed from the parameters as they
    stood at the top of the step; only then do the two updates apply, encoder
    first.
    """
    state, x_hat = model(batch, sample=True, generator=generator)
    _, x_p = model.generate(batch.shape[0], sample=True, generator=generator)
    l_d, d_parts = discriminator_loss(model, batch, x_hat, x_p, state, cfg, generator=generator)
    l_g, g_parts = generator_loss(model, batch, x_hat, x_p, cfg, generator=generator)
    _require_finite(epoch, batch_index, d_loss=l_d, g_loss=l_g, **d_parts)

    enc_params = model.encoder_parameters()
    dec_params = model.decoder_parameters()
    for p in model.parameters():
        p.grad = None
    l_d.backward(retain_graph=True)
    enc_grads = [None if p.grad is None else p.grad.clone() for p in enc_params]
    for p in model.parameters():
        p.grad = None
    l_g.backward()
    dec_grads = [None if p.grad is None else p.grad.clone() for p in dec_params]

    for p in model.parameters():
        p.grad = None
    for p, g in zip(enc_params, enc_grads):
        p.grad = g
    enc_opt.step()
    for p in model.parameters():
        p.grad = None
    for p, g in zip(dec_params, dec_grads):
        p.grad = g
    dec_opt.step()

    record = dict(d_loss=_scalar(l_d), g_loss=_scalar(l_g), **d_parts,
                  kl_rec_live=g_parts["kl_rec"], kl_gen_live=g_parts["kl_gen"])
    return model, record


def train_adversarial_phase(model: HVAE, data: torch.Tensor, cfg: TrainConfig, *,
                            generator: torch.Generator | None = None,
                            records: list[EpochRecord] | None = None) -> HVAE:
    if data.shape[0] == 0:
        raise InvalidInputError("no training windows")
    if generator is None:
        generator = torch.Generator()
        generator.manual_seed(cfg.seed)
    enc_opt = Adamax(model.encoder_parameters(), lr=cfg.lr_gan)
    dec_opt = Adamax(model.decoder_parameters(), lr=cfg.lr_gan)
    n = data.shape[0]
    for epoch in range(cfg.epoch - cfg.epoch_gan + 1, cfg.epoch + 1):
        sums = dict(recon=0.0, kl_real=0.0, d_loss=0.0, g_loss=0.0)
        for i, batch in enumerate(_minibatches(data, cfg.batch_size, generator)):
            model, rec = adversarial_step(model, batch, cfg, enc_opt, dec_opt,
                                          generator=generator, epoch=epoch, batch_index=i)
            for key in sums:
                sums[key] += rec[key]
        if records is not None:
            records.append(EpochRecord(epoch=epoch, phase="gan", recon=sums["recon"] / n,
                                       kl=sums["kl_real"] / n, d_loss=sums["d_loss"] / n,
                                       g_loss=sums["g_loss"] / n))
    return model


@dataclass
class FitResult:
    model: HVAE
    log: list[EpochRecord]
    standardization: StandardizationParams
    window_count: int


def fit(series: TimeSeries, cfg: TrainConfig, model_cfg: ArchConfig | None = None, *,
        step: int = 1) -> FitResult:
    """Full Algorithm: preprocess, VAE epochs, then adversarial epochs.

    With ``epoch_gan = 0`` this is the plain variant; the default 50/5 split
    gives 45 joint epochs and 5 adversarial ones.
    """
    arch = model_cfg or ArchConfig()
    if len(series) < arch.window_size:
        raise InvalidInputError(
            f"series {series.id!r} has {len(series)} steps; needs >= window size {arch.window_size}")
    data, std_params = prepare_training_data(series, arch.window_size, step)
    generator = torch.Generator()
    generator.manual_seed(cfg.seed)
    model = build_model(arch, seed=cfg.seed)
    log: list[EpochRecord] = []
    train_vae_phase(model, data, cfg, generator=generator, records=log)
    if cfg.epoch_gan > 0:
        train_adversarial_phase(model, data, cfg, generator=generator, records=log)
    return FitResult(model=model, log=log, standardization=std_params, window_count=data.shape[0])
