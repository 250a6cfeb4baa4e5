"""Hierarchical VAE over [B, 2, N, N] window images.

A bottom-up deterministic trunk extracts features at every scale; a shared
top-down network then samples grouped latent variables auto-regressively
(each group conditioned on all previous groups) and decodes back to image
space. Posteriors are parameterized as residuals on the prior: the network
emits ``delta_mu`` and ``log delta_sigma`` so the posterior of each variable
is ``N(mu + delta_mu, sigma * delta_sigma)``, which keeps the per-variable
KL in the compact closed form used by the losses below.

The same top-down pass serves three roles: posterior inference (encoder
features supplied), prior sampling (no encoder features), and decoding
(latent samples fixed). Group 1 is the most abstract; its prior is a
standard Normal.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import torch
from torch import nn

from .errors import InvalidConfigurationError, InvalidInputError

CHECKPOINT_FORMAT = "imvad-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ArchConfig:
    """Network layout; defaults give flattened latent sizes (512, 256, 128).

    ``stem_stride > 1`` makes the trunk compute at ``window_size/stem_stride``
    resolution: the stem convolution downsamples immediately and the output
    head renders at trunk resolution before nearest-upsampling back to the
    window size. That trades off fine reconstruction detail for a large
    constant-factor speedup; the full-resolution default keeps stride 1.
    """

    window_size: int = 64
    in_channels: int = 2
    base_channels: int = 16
    max_channels: int = 64
    base_resolution: int = 4
    cells_per_scale: int = 1
    groups: tuple[tuple[int, int], ...] = ((4, 32), (8, 4), (8, 2))
    stem_stride: int = 1
    sigma_floor: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple((int(r), int(c)) for r, c in self.groups))
        if self.stem_stride < 1 or 2 ** round(math.log2(self.stem_stride)) != self.stem_stride:
            raise InvalidConfigurationError(f"stem_stride must be a power of two, got {self.stem_stride}")
        if self.window_size % self.stem_stride != 0:
            raise InvalidConfigurationError("window_size must be divisible by stem_stride")
        feature = self.window_size // self.stem_stride
        if feature < self.base_resolution or self.base_resolution < 1:
            raise InvalidConfigurationError(
                f"trunk resolution {feature} must be >= base_resolution {self.base_resolution} >= 1")
        ratio = feature / self.base_resolution
        if 2 ** round(math.log2(ratio)) != ratio:
            raise InvalidConfigurationError(
                f"trunk resolution {feature} must be base_resolution * 2^k")
        if not self.groups:
            raise InvalidConfigurationError("at least one latent group is required")
        ladder = set(self.resolutions)
        prev = 0
        for res, ch in self.groups:
            if res not in ladder:
                raise InvalidConfigurationError(f"group resolution {res} not in decoder ladder {sorted(ladder)}")
            if res < prev:
                raise InvalidConfigurationError("group resolutions must be non-decreasing top-down")
            if ch < 1:
                raise InvalidConfigurationError("group channel counts must be >= 1")
            prev = res
        if self.base_channels < 1 or self.max_channels < self.base_channels:
            raise InvalidConfigurationError("need 1 <= base_channels <= max_channels")
        if self.cells_per_scale < 0:
            raise InvalidConfigurationError("cells_per_scale must be >= 0")

    @property
    def resolutions(self) -> tuple[int, ...]:
        """Spatial sizes from the trunk's finest scale down to the top-down start."""
        out = [self.window_size // self.stem_stride]
        while out[-1] > self.base_resolution:
            out.append(out[-1] // 2)
        return tuple(out)

    def channels_at(self, resolution: int) -> int:
        finest = self.window_size // self.stem_stride
        return min(self.max_channels, self.base_channels * (finest // resolution))

    @property
    def group_count(self) -> int:
        return len(self.groups)

    @property
    def latent_dims(self) -> tuple[int, ...]:
        return tuple(res * res * ch for res, ch in self.groups)


@dataclass
class GroupDistribution:
    """Per-group prior parameters and posterior residuals, all [B, c, r, r]."""

    mu: torch.Tensor
    sigma: torch.Tensor
    delta_mu: torch.Tensor
    delta_sigma: torch.Tensor


@dataclass
class LatentState:
    """Samples z_1..z_G (top to bottom) with their distribution parameters."""

    samples: list[torch.Tensor]
    group_dists: list[GroupDistribution]

    @property
    def group_count(self) -> int:
        return len(self.samples)

    @property
    def flattened_dims(self) -> tuple[int, ...]:
        return tuple(z[0].numel() for z in self.samples)

    def flat_samples(self) -> list[torch.Tensor]:
        return [z.reshape(z.shape[0], -1) for z in self.samples]


class ResidualCell(nn.Module):
    """Norm -> depthwise 3x3 -> pointwise 1x1 -> SiLU, added to the input."""

    def __init__(self, channels: int):
        super().__init__()
        self.norm = nn.GroupNorm(1, channels)
        self.depthwise = nn.Conv2d(channels, channels, 3, padding=1, groups=channels)
        self.pointwise = nn.Conv2d(channels, channels, 1)
        self.act = nn.SiLU()

    def forward(self, x):
        return x + self.act(self.pointwise(self.depthwise(self.norm(x))))


def _cells(channels: int, count: int) -> nn.Sequential:
    return nn.Sequential(*[ResidualCell(channels) for _ in range(count)])


class BottomUp(nn.Module):
    """Deterministic encoder trunk; exposes the feature map at each scale."""

    def __init__(self, cfg: ArchConfig):
        super().__init__()
        self.cfg = cfg
        res = cfg.resolutions
        self.stem = nn.Conv2d(cfg.in_channels, cfg.channels_at(res[0]), 3,
                              stride=cfg.stem_stride, padding=1)
        self.stages = nn.ModuleDict({str(r): _cells(cfg.channels_at(r), cfg.cells_per_scale) for r in res})
        self.downs = nn.ModuleDict({
            str(r): nn.Conv2d(cfg.channels_at(r), cfg.channels_at(r // 2), 3, stride=2, padding=1)
            for r in res[:-1]})

    def forward(self, x) -> dict[int, torch.Tensor]:
        feats = {}
        h = self.stem(x)
        for r in self.cfg.resolutions:
            h = self.stages[str(r)](h)
            feats[r] = h
            if str(r) in self.downs:
                h = self.downs[str(r)](h)
        return feats


class HVAE(nn.Module):
    def __init__(self, config: ArchConfig | None = None):
        super().__init__()
        cfg = config or ArchConfig()
        self.config = cfg
        self.bottom_up = BottomUp(cfg)

        base_c = cfg.channels_at(cfg.base_resolution)
        self.start = nn.Parameter(torch.zeros(base_c, cfg.base_resolution, cfg.base_resolution))

        self.posterior_heads = nn.ModuleList()
        self.prior_heads = nn.ModuleList()
        self.merge_heads = nn.ModuleList()
        self.group_cells = nn.ModuleList()
        for g, (res, ch) in enumerate(cfg.groups):
            dec_c = cfg.channels_at(res)
            self.posterior_heads.append(nn.Conv2d(dec_c + cfg.channels_at(res), 2 * ch, 1))
            # group 1 keeps a fixed N(0, I) prior; later groups predict theirs
            self.prior_heads.append(nn.Identity() if g == 0 else nn.Conv2d(dec_c, 2 * ch, 1))
            self.merge_heads.append(nn.Conv2d(dec_c + ch, dec_c, 1))
            self.group_cells.append(_cells(dec_c, cfg.cells_per_scale))

        dec_res = list(reversed(cfg.resolutions))
        group_res = {res for res, _ in cfg.groups}
        self.upsamples = nn.ModuleDict({
            str(r): nn.Conv2d(cfg.channels_at(r // 2), cfg.channels_at(r), 3, padding=1)
            for r in dec_res[1:]})
        self.stage_cells = nn.ModuleDict({
            str(r): _cells(cfg.channels_at(r), cfg.cells_per_scale)
            for r in dec_res if r not in group_res})
        out_c = cfg.channels_at(dec_res[-1])
        head = [nn.GroupNorm(1, out_c), nn.SiLU(),
                nn.Conv2d(out_c, cfg.in_channels, 3, padding=1)]
        if cfg.stem_stride > 1:
            # bilinear, not nearest: block artifacts would floor the
            # reconstruction error on smooth image content
            head.append(nn.Upsample(scale_factor=cfg.stem_stride, mode="bilinear",
                                    align_corners=False))
        self.head = nn.Sequential(*head)

    # ---- parameter partition (adversarial phase) ----

    def encoder_parameters(self) -> list[nn.Parameter]:
        """Recognition side: bottom-up trunk plus posterior residual heads."""
        return list(self.bottom_up.parameters()) + list(self.posterior_heads.parameters())

    def decoder_parameters(self) -> list[nn.Parameter]:
        """Generative side: everything the encoder does not own."""
        enc = {id(p) for p in self.encoder_parameters()}
        return [p for p in self.parameters() if id(p) not in enc]

    # ---- distribution plumbing ----

    def _scales(self, raw_log: torch.Tensor) -> torch.Tensor:
        # exponentiated with the log floored, so scales stay strictly positive
        return torch.exp(raw_log.clamp(min=math.log(self.config.sigma_floor), max=10.0))

    def _draw(self, mean, std, sample, generator):
        if not sample:
            return mean
        eps = torch.randn(mean.shape, dtype=mean.dtype, device=mean.device, generator=generator)
        return mean + std * eps

    def _check_input(self, x) -> torch.Tensor:
        cfg = self.config
        if x.ndim != 4 or x.shape[1] != cfg.in_channels or x.shape[2:] != (cfg.window_size, cfg.window_size):
            raise InvalidInputError(
                f"expected input of shape [B, {cfg.in_channels}, {cfg.window_size}, {cfg.window_size}], "
                f"got {tuple(x.shape)}")
        return x

    def bottom_up_features(self, x) -> list[torch.Tensor]:
        """Encoder feature map feeding each latent group, top-down order."""
        feats = self.bottom_up(self._check_input(x))
        return [feats[res] for res, _ in self.config.groups]

    # ---- the shared top-down pass ----

    def top_down(self, enc_feats: Sequence[torch.Tensor] | None = None, *, batch: int | None = None,
                 sample: bool = True, generator: torch.Generator | None = None,
                 fixed: Sequence[torch.Tensor] | None = None) -> tuple[LatentState, torch.Tensor]:
        """Run the top-down network in one of three modes.

        With ``enc_feats`` the posterior of each group is sampled; without, the
        prior is; with ``fixed`` the given samples are used verbatim (decoding).
        Returns the latent state and the reconstruction.
        """
        cfg = self.config
        if enc_feats is not None:
            batch = enc_feats[0].shape[0]
        elif fixed is not None:
            batch = fixed[0].shape[0]
        elif batch is None:
            raise InvalidInputError("prior sampling needs an explicit batch size")

        h = self.start.unsqueeze(0).expand(batch, -1, -1, -1)
        samples: list[torch.Tensor] = []
        dists: list[GroupDistribution] = []
        g = 0
        for res in reversed(cfg.resolutions):
            if res != cfg.base_resolution:
                h = self.upsamples[str(res)](
                    nn.functional.interpolate(h, scale_factor=2, mode="nearest"))
            had_group = False
            while g < cfg.group_count and cfg.groups[g][0] == res:
                had_group = True
                ch = cfg.groups[g][1]
                if g == 0:
                    mu = h.new_zeros((batch, ch, res, res))
                    sigma = h.new_ones((batch, ch, res, res))
                else:
                    raw = self.prior_heads[g](h)
                    mu, sigma = raw[:, :ch], self._scales(raw[:, ch:])
                if fixed is not None:
                    delta_mu = torch.zeros_like(mu)
                    delta_sigma = torch.ones_like(sigma)
                    z = fixed[g].reshape(batch, ch, res, res).to(dtype=h.dtype)
                elif enc_feats is not None:
                    raw = self.posterior_heads[g](torch.cat([h, enc_feats[g]], dim=1))
                    delta_mu, delta_sigma = raw[:, :ch], self._scales(raw[:, ch:])
                    z = self._draw(mu + delta_mu, sigma * delta_sigma, sample, generator)
                else:
                    delta_mu = torch.zeros_like(mu)
                    delta_sigma = torch.ones_like(sigma)
                    z = self._draw(mu, sigma, sample, generator)
                dists.append(GroupDistribution(mu=mu, sigma=sigma, delta_mu=delta_mu, delta_sigma=delta_sigma))
                samples.append(z)
                h = self.group_cells[g](self.merge_heads[g](torch.cat([h, z], dim=1)))
                g += 1
            if not had_group and str(res) in self.stage_cells:
                h = self.stage_cells[str(res)](h)
        return LatentState(samples=samples, group_dists=dists), self.head(h)

    # ---- public API ----

    def encode(self, x, *, sample: bool = True, generator: torch.Generator | None = None) -> LatentState:
        """Posterior latent state for a batch; ``sample=False`` uses the means."""
        state, _ = self.top_down(self.bottom_up_features(x), sample=sample, generator=generator)
        return state

    def sample_prior(self, batch: int, *, sample: bool = True,
                     generator: torch.Generator | None = None) -> LatentState:
        state, _ = self.top_down(batch=batch, sample=sample, generator=generator)
        return state

    def decode(self, z: LatentState | Sequence[torch.Tensor]) -> torch.Tensor:
        """Deterministic reconstruction from latent samples."""
        samples = z.samples if isinstance(z, LatentState) else list(z)
        if len(samples) != self.config.group_count:
            raise InvalidInputError(f"expected {self.config.group_count} latent groups, got {len(samples)}")
        for got, want, (res, ch) in zip(samples, self.config.latent_dims, self.config.groups):
            if got[0].numel() != want:
                raise InvalidInputError(f"latent group of size {got[0].numel()} does not match {ch}x{res}x{res}")
        _, x_hat = self.top_down(fixed=samples)
        return x_hat

    def forward(self, x, *, sample: bool = True,
                generator: torch.Generator | None = None) -> tuple[LatentState, torch.Tensor]:
        """Encode and reconstruct in a single top-down pass."""
        return self.top_down(self.bottom_up_features(x), sample=sample, generator=generator)

    def generate(self, batch: int, *, sample: bool = True,
                 generator: torch.Generator | None = None) -> tuple[LatentState, torch.Tensor]:
        """Draw from the prior and decode, in a single top-down pass."""
        return self.top_down(batch=batch, sample=sample, generator=generator)

    def reconstruct(self, x, *, sample: bool = False,
                    generator: torch.Generator | None = None) -> torch.Tensor:
        """Reconstruction only; deterministic (posterior means) by default."""
        return self.forward(x, sample=sample, generator=generator)[1]


def init_parameters(model: nn.Module, generator: torch.Generator | None = None) -> nn.Module:
    """Reinitialize every parameter from an explicit generator.

    Covers all parameters so two builds from the same seed agree bitwise
    regardless of global RNG state.
    """
    with torch.no_grad():
        norm_params = set()
        for m in model.modules():
            if isinstance(m, nn.GroupNorm):
                m.weight.fill_(1.0)
                m.bias.zero_()
                norm_params.update((id(m.weight), id(m.bias)))
        for name, p in model.named_parameters():
            if id(p) in norm_params:
                continue
            if name == "start":
                p.normal_(0.0, 0.1, generator=generator)
            elif p.ndim >= 2:
                bound = 1.0 / math.sqrt(p[0].numel())
                p.uniform_(-bound, bound, generator=generator)
            else:
                p.zero_()
    return model


def build_model(config: ArchConfig | None = None, seed: int | None = None,
                dtype: torch.dtype = torch.float32) -> HVAE:
    model = HVAE(config).to(dtype)
    gen = torch.Generator()
    gen.manual_seed(0 if seed is None else int(seed))
    init_parameters(model, gen)
    return model


# ---- losses ----


def recon_loss(x, x_hat) -> torch.Tensor:
    """Half the summed squared error over every batch/spatial/channel entry."""
    x = torch.as_tensor(x)
    x_hat = torch.as_tensor(x_hat)
    if x.shape != x_hat.shape:
        raise InvalidInputError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    diff = x - x_hat
    return 0.5 * (diff * diff).sum()


def kl_variable(mu, sigma, delta_mu, delta_sigma) -> torch.Tensor:
    """KL of the residual posterior ``N(mu+dmu, (sigma*dsig)^2)`` from its prior.

    Closed form ``(dmu^2/sigma^2 + dsig^2 - log dsig^2 - 1) / 2``; zero exactly
    when ``dmu = 0`` and ``dsig = 1``. Elementwise over broadcastable inputs.
    """
    def lift(v):
        return v if torch.is_tensor(v) else torch.as_tensor(v, dtype=torch.float64)

    mu, sigma, delta_mu, delta_sigma = lift(mu), lift(sigma), lift(delta_mu), lift(delta_sigma)
    if (sigma <= 0).any() or (delta_sigma <= 0).any():
        raise InvalidInputError("sigma and delta_sigma must be strictly positive")
    ratio2 = (delta_mu / sigma) ** 2
    ds2 = delta_sigma * delta_sigma
    # clamp absorbs float rounding just below zero near the prior
    return torch.clamp(0.5 * (ratio2 + ds2 - torch.log(ds2) - 1.0), min=0.0)


def kl_total(state: LatentState) -> torch.Tensor:
    """Sum of per-variable KL over all groups (and the batch)."""
    total = None
    for d in state.group_dists:
        term = kl_variable(d.mu, d.sigma, d.delta_mu, d.delta_sigma).sum()
        total = term if total is None else total + term
    if total is None:
        raise InvalidInputError("latent state has no groups")
    return total


def elbo_loss(x, x_hat, state: LatentState) -> torch.Tensor:
    """Training objective: reconstruction plus total KL."""
    return recon_loss(x, x_hat) + kl_total(state)


# ---- checkpoints ----


def save_checkpoint(model: HVAE, path, *, standardization=None, extra: dict | None = None) -> None:
    """Self-describing checkpoint: format tag, architecture, parameters,
    and the training series' standardization."""
    std = None
    if standardization is not None:
        std = {"mean": float(standardization.mean), "std": float(standardization.std)}
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "arch": asdict(model.config),
        "state": model.state_dict(),
        "standardization": std,
        "extra": dict(extra or {}),
    }
    torch.save(payload, path)


def load_checkpoint(path) -> tuple[HVAE, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise InvalidInputError(f"{path} is not a model checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise InvalidInputError(f"unsupported checkpoint version {payload.get('version')}")
    model = HVAE(ArchConfig(**payload["arch"]))
    state = payload["state"]
    dtypes = {v.dtype for v in state.values()}
    if dtypes == {torch.float64}:
        model.double()
    model.load_state_dict(state)
    return model, payload
