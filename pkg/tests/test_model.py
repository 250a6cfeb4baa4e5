import math

import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from imvad.config import ARCH_PRESETS
from imvad.errors import InvalidConfigurationError, InvalidInputError
from imvad.model import (ArchConfig, build_model, elbo_loss, kl_total, kl_variable,
                         load_checkpoint, recon_loss, save_checkpoint)
from imvad.series import StandardizationParams

MINI = ARCH_PRESETS["mini"]


def gen(seed=0):
    g = torch.Generator()
    g.manual_seed(seed)
    return g


def mini_model(seed=1):
    return build_model(MINI, seed=seed)


def mini_batch(batch=2, seed=0):
    return torch.randn(batch, 2, MINI.window_size, MINI.window_size, generator=gen(seed))


# ---- closed-form KL ----

def two_gaussian_kl(m0, s0, m1, s1):
    """KL(N(m1, s1^2) || N(m0, s0^2)), textbook form."""
    return math.log(s0 / s1) + (s1 ** 2 + (m1 - m0) ** 2) / (2 * s0 ** 2) - 0.5


def test_kl_variable_prior_match_is_zero():
    assert float(kl_variable(0.7, 2.0, 0.0, 1.0)) == 0.0


def test_kl_variable_unit_shift():
    assert float(kl_variable(0.0, 3.0, 3.0, 1.0)) == pytest.approx(0.5)


def test_kl_variable_worked_example():
    got = float(kl_variable(0.0, 1.0, 1.0, 2.0))
    assert got == pytest.approx(0.5 * (1 + 4 - math.log(4) - 1))
    assert got == pytest.approx(1.30685, abs=1e-5)
    assert got == pytest.approx(two_gaussian_kl(0.0, 1.0, 1.0, 2.0), abs=1e-12)


@given(st.floats(-10, 10), st.floats(0.01, 10), st.floats(-10, 10), st.floats(0.01, 10))
def test_kl_variable_matches_general_formula(mu, sigma, dmu, dsig):
    ours = float(kl_variable(mu, sigma, dmu, dsig))
    reference = two_gaussian_kl(mu, sigma, mu + dmu, sigma * dsig)
    assert ours == pytest.approx(reference, abs=1e-9, rel=1e-9)


@given(st.floats(-10, 10), st.floats(0.01, 10), st.floats(-10, 10), st.floats(0.01, 10))
def test_kl_variable_nonnegative(mu, sigma, dmu, dsig):
    value = float(kl_variable(mu, sigma, dmu, dsig))
    assert value >= 0.0
    if dmu != 0.0 or dsig != 1.0:
        assert value >= 0.0  # strictly > 0 except at the float-rounding floor
    else:
        assert value == 0.0


def test_kl_variable_rejects_bad_scales():
    with pytest.raises(InvalidInputError):
        kl_variable(0.0, 0.0, 0.0, 1.0)
    with pytest.raises(InvalidInputError):
        kl_variable(0.0, 1.0, 0.0, -2.0)


def test_kl_total_zero_at_prior():
    model = mini_model()
    state = model.sample_prior(4, generator=gen(3))
    assert float(kl_total(state)) == 0.0


def test_kl_total_additivity():
    # two variables contributing 0.5 each
    from imvad.model import GroupDistribution, LatentState
    t = lambda v: torch.tensor([v, v], dtype=torch.float64)
    dist = GroupDistribution(mu=t(0.0), sigma=t(1.0), delta_mu=t(1.0), delta_sigma=t(1.0))
    state = LatentState(samples=[t(0.0)], group_dists=[dist])
    assert float(kl_total(state)) == pytest.approx(1.0)


def test_kl_total_matches_scalar_loop():
    model = mini_model()
    state = model.encode(mini_batch(3), sample=True, generator=gen(1))
    total = 0.0
    for d in state.group_dists:
        for m, s, dm, ds in zip(d.mu.flatten().tolist(), d.sigma.flatten().tolist(),
                                d.delta_mu.flatten().tolist(), d.delta_sigma.flatten().tolist()):
            total += two_gaussian_kl(m, s, m + dm, s * ds)
    assert float(kl_total(state)) == pytest.approx(total, rel=1e-6)


# ---- reconstruction loss ----

def test_recon_loss_identity_zero():
    x = mini_batch()
    assert float(recon_loss(x, x)) == 0.0


def test_recon_loss_single_entry():
    assert float(recon_loss(torch.tensor([[1.0]]), torch.tensor([[3.0]]))) == pytest.approx(2.0)


def test_recon_loss_matches_double_loop():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 3, 3, 2))
    y = rng.normal(size=(2, 3, 3, 2))
    expected = 0.0
    for a, b in zip(x.flatten(), y.flatten()):
        expected += 0.5 * (a - b) ** 2
    assert float(recon_loss(torch.tensor(x), torch.tensor(y))) == pytest.approx(expected, abs=1e-9)


def test_recon_loss_shape_mismatch():
    with pytest.raises(InvalidInputError):
        recon_loss(torch.zeros(2, 2), torch.zeros(2, 3))


def test_elbo_is_recon_plus_kl():
    model = mini_model().double()
    x = mini_batch(3).double()
    state, x_hat = model(x, sample=True, generator=gen(2))
    total = float(elbo_loss(x, x_hat, state))
    assert total == pytest.approx(float(recon_loss(x, x_hat)) + float(kl_total(state)), rel=1e-12)


def test_elbo_is_recon_plus_kl_float32():
    model = mini_model()
    x = mini_batch(3)
    state, x_hat = model(x, sample=True, generator=gen(2))
    total = float(elbo_loss(x, x_hat, state))
    assert total == pytest.approx(float(recon_loss(x, x_hat)) + float(kl_total(state)), rel=1e-6)


def test_elbo_zero_at_perfect_fit_and_prior_posterior():
    model = mini_model()
    state = model.sample_prior(2, generator=gen(0))
    x = torch.zeros(2, 2, 8, 8)
    assert float(elbo_loss(x, x, state)) == 0.0


# ---- encode / decode contracts ----

def test_encode_deterministic_mode_repeatable():
    model = mini_model()
    x = mini_batch()
    a = model.encode(x, sample=False)
    b = model.encode(x, sample=False)
    for za, zb in zip(a.samples, b.samples):
        assert torch.equal(za, zb)
    for da, db in zip(a.group_dists, b.group_dists):
        assert torch.equal(da.delta_mu, db.delta_mu)


def test_deterministic_sample_is_posterior_mean():
    model = mini_model()
    state = model.encode(mini_batch(), sample=False)
    for z, d in zip(state.samples, state.group_dists):
        assert torch.allclose(z, d.mu + d.delta_mu)


def test_default_group_dims():
    model = build_model(ARCH_PRESETS["default"], seed=0)
    x = torch.randn(2, 2, 64, 64, generator=gen(0))
    state = model.encode(x, sample=False)
    assert state.group_count == 3
    assert state.flattened_dims == (512, 256, 128)
    assert [z.shape[0] for z in state.flat_samples()] == [2, 2, 2]


def test_prior_structure_matches_spec_dims():
    model = build_model(ARCH_PRESETS["default"], seed=0)
    state = model.sample_prior(3, sample=False)
    assert state.flattened_dims == (512, 256, 128)


def test_prior_deterministic_top_group_zero():
    model = mini_model()
    state = model.sample_prior(2, sample=False)
    assert torch.equal(state.samples[0], torch.zeros_like(state.samples[0]))


def test_prior_sampling_uses_predicted_params():
    # replaying the same generator stream recovers z_g = mu_g + sigma_g * eps_g
    model = mini_model()
    state = model.sample_prior(4, sample=True, generator=gen(77))
    replay = gen(77)
    for z, d in zip(state.samples, state.group_dists):
        eps = torch.randn(z.shape, generator=replay)
        assert torch.allclose(z, d.mu + d.sigma * eps, atol=1e-7)


def test_prior_group2_moments_with_stubbed_conditioning():
    # pin the conditioned group's prior parameters to constants; its samples
    # must then be distributed N(mu, sigma) by Monte Carlo moments
    model = mini_model()
    mu_c, log_sigma_c = 0.8, -0.4

    class FixedPrior(torch.nn.Module):
        def forward(self, h):
            ch = model.config.groups[1][1]
            out = torch.empty(h.shape[0], 2 * ch, h.shape[2], h.shape[3], dtype=h.dtype)
            out[:, :ch] = mu_c
            out[:, ch:] = log_sigma_c
            return out

    model.prior_heads[1] = FixedPrior()
    n = 50_000
    state = model.sample_prior(n, sample=True, generator=gen(21))
    z2 = state.samples[1].reshape(n, -1)
    sigma_c = math.exp(log_sigma_c)
    se_mean = sigma_c / math.sqrt(n)
    assert torch.all((z2.mean(0) - mu_c).abs() < 3 * se_mean)
    se_std = sigma_c / math.sqrt(2 * (n - 1))
    assert torch.all((z2.std(0) - sigma_c).abs() < 3 * se_std)


def test_posterior_sampling_uses_residual_params():
    model = mini_model()
    x = mini_batch(4)
    state = model.encode(x, sample=True, generator=gen(5))
    replay = gen(5)
    for z, d in zip(state.samples, state.group_dists):
        eps = torch.randn(z.shape, generator=replay)
        assert torch.allclose(z, (d.mu + d.delta_mu) + (d.sigma * d.delta_sigma) * eps, atol=1e-7)


def test_reparameterization_moments_100k():
    # 1e5 draws from a real posterior: moments within 3 standard errors
    model = mini_model()
    state = model.encode(mini_batch(1), sample=True, generator=gen(9))
    d = state.group_dists[0]
    mean = (d.mu + d.delta_mu).flatten()
    std = (d.sigma * d.delta_sigma).flatten()
    n = 100_000
    draws = model._draw(mean.expand(n, -1), std.expand(n, -1), True, gen(123))
    se_mean = std / math.sqrt(n)
    assert torch.all((draws.mean(0) - mean).abs() <= 3 * se_mean)
    se_std = std / math.sqrt(2 * (n - 1))
    assert torch.all((draws.std(0) - std).abs() <= 3 * se_std)


def test_decode_shapes():
    model = build_model(ARCH_PRESETS["default"], seed=0)
    state = model.sample_prior(2, sample=False)
    out = model.decode(state)
    assert out.shape == (2, 2, 64, 64)


def test_decode_accepts_flat_samples():
    model = mini_model()
    state = model.sample_prior(3, sample=True, generator=gen(1))
    spatial = model.decode(state.samples)
    flat = model.decode(state.flat_samples())
    assert torch.equal(spatial, flat)


def test_decode_pure_function():
    model = mini_model()
    state = model.sample_prior(2, sample=True, generator=gen(4))
    a = model.decode(state)
    b = model.decode(state)
    assert torch.equal(a, b)


def test_decode_matches_joint_forward():
    model = mini_model()
    x = mini_batch(2)
    state, x_hat = model(x, sample=True, generator=gen(8))
    assert torch.allclose(model.decode(state), x_hat, atol=1e-7)


def test_decode_rejects_wrong_shapes():
    model = mini_model()
    with pytest.raises(InvalidInputError):
        model.decode([torch.zeros(2, 4)])
    with pytest.raises(InvalidInputError):
        model.decode([torch.zeros(2, 4), torch.zeros(2, 3)])


def test_encode_rejects_wrong_shapes():
    model = mini_model()
    with pytest.raises(InvalidInputError):
        model.encode(torch.zeros(2, 2, 16, 16))
    with pytest.raises(InvalidInputError):
        model.encode(torch.zeros(2, 1, 8, 8))


def test_decode_gradient_matches_finite_differences():
    model = mini_model().double()
    state = model.sample_prior(1, sample=True, generator=gen(2))
    z = [s.detach().clone().requires_grad_(True) for s in state.samples]
    weight = torch.randn(1, 2, 8, 8, generator=gen(3), dtype=torch.float64)

    def f(latents):
        return (model.decode(latents) * weight).sum()

    loss = f(z)
    grads = torch.autograd.grad(loss, z)
    h = 1e-6
    for gi, (zt, grad) in enumerate(zip(z, grads)):
        flat = zt.detach().flatten()
        for idx in range(flat.numel()):
            plus = [t.detach().clone() for t in z]
            minus = [t.detach().clone() for t in z]
            plus[gi].flatten()[idx] += h
            minus[gi].flatten()[idx] -= h
            fd = (f(plus) - f(minus)) / (2 * h)
            an = grad.flatten()[idx]
            denom = max(abs(float(fd)), abs(float(an)), 1e-8)
            assert abs(float(fd) - float(an)) / denom < 1e-3


def test_posterior_factorization_autoregressive_order():
    model = mini_model()
    x = mini_batch(2)
    feats = model.bottom_up_features(x)
    base, _ = model.top_down(feats, sample=False)
    # perturbing the features routed to the LAST group leaves earlier groups alone
    bumped = [f.clone() for f in feats]
    bumped[-1] = bumped[-1] + torch.randn(bumped[-1].shape, generator=gen(6))
    moved, _ = model.top_down(bumped, sample=False)
    for g in range(model.config.group_count - 1):
        assert torch.equal(base.samples[g], moved.samples[g])
        assert torch.equal(base.group_dists[g].delta_mu, moved.group_dists[g].delta_mu)
    assert not torch.equal(base.group_dists[-1].delta_mu, moved.group_dists[-1].delta_mu)
    # perturbing the TOP group's features moves everything downstream of it
    bumped0 = [f.clone() for f in feats]
    bumped0[0] = bumped0[0] + torch.randn(bumped0[0].shape, generator=gen(7))
    moved0, _ = model.top_down(bumped0, sample=False)
    assert not torch.equal(base.samples[0], moved0.samples[0])


def test_scales_strictly_positive():
    model = mini_model()
    state = model.encode(mini_batch(3) * 100.0, sample=True, generator=gen(0))
    for d in state.group_dists:
        assert (d.sigma > 0).all()
        assert (d.delta_sigma > 0).all()


# ---- architecture validation ----

def test_arch_rejects_bad_ladder():
    with pytest.raises(InvalidConfigurationError):
        ArchConfig(window_size=48, base_resolution=5)


def test_arch_rejects_group_off_ladder():
    with pytest.raises(InvalidConfigurationError):
        ArchConfig(window_size=64, base_resolution=4, groups=((5, 2),))


def test_arch_rejects_decreasing_group_resolution():
    with pytest.raises(InvalidConfigurationError):
        ArchConfig(window_size=64, base_resolution=4, groups=((8, 2), (4, 4)))


def test_arch_latent_dims():
    assert ArchConfig().latent_dims == (512, 256, 128)
    assert MINI.latent_dims == (4, 2)


# ---- checkpoints ----

def test_checkpoint_round_trips_bitwise(tmp_path):
    model = mini_model(seed=5)
    path = tmp_path / "m.pt"
    save_checkpoint(model, path, standardization=StandardizationParams(mean=1.5, std=2.5),
                    extra={"series_id": "abc"})
    loaded, payload = load_checkpoint(path)
    assert payload["standardization"] == {"mean": 1.5, "std": 2.5}
    assert payload["extra"]["series_id"] == "abc"
    original = model.state_dict()
    restored = loaded.state_dict()
    assert original.keys() == restored.keys()
    for key in original:
        assert torch.equal(original[key], restored[key]), key


def test_checkpoint_preserves_behavior(tmp_path):
    model = mini_model(seed=6)
    path = tmp_path / "m.pt"
    save_checkpoint(model, path)
    loaded, _ = load_checkpoint(path)
    x = mini_batch(2, seed=4)
    assert torch.equal(model.reconstruct(x), loaded.reconstruct(x))


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "junk.pt"
    torch.save({"something": 1}, path)
    with pytest.raises(InvalidInputError):
        load_checkpoint(path)


def test_checkpoint_float64_round_trip(tmp_path):
    model = mini_model(seed=7).double()
    path = tmp_path / "m64.pt"
    save_checkpoint(model, path)
    loaded, _ = load_checkpoint(path)
    assert next(loaded.parameters()).dtype == torch.float64


def test_build_model_seeded_determinism():
    a = build_model(MINI, seed=11)
    b = build_model(MINI, seed=11)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)
    c = build_model(MINI, seed=12)
    assert any(not torch.equal(pa, pc) for pa, pc in zip(a.parameters(), c.parameters()))
