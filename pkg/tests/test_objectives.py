import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import legan.autodiff as ad
from legan.autodiff import Tensor
from legan.networks import build_discriminator, embed
from legan.objectives import (
    ObjectiveKind,
    clip_weights,
    d_loss_ls,
    d_loss_vanilla,
    d_loss_wasserstein,
    g_loss_ls,
    g_loss_vanilla,
    g_loss_wasserstein,
    l2_penalty,
    lipschitz_probe,
)

logits = st.lists(st.floats(min_value=-500, max_value=500), min_size=1, max_size=8)


def grad_of(loss_fn, values):
    t = Tensor(np.asarray(values, dtype=float), requires_grad=True)
    loss_fn(t).backward()
    return t.grad


# --- vanilla --------------------------------------------------------------


def test_d_loss_vanilla_at_zero_is_two_log_two_exactly():
    zeros = Tensor(np.zeros(4))
    assert d_loss_vanilla(zeros, zeros).item() == 2.0 * math.log(2.0)


def test_d_loss_vanilla_perfect_discrimination_approaches_zero():
    loss = d_loss_vanilla(Tensor([500.0, 500.0]), Tensor([-500.0, -500.0]))
    assert 0.0 <= loss.item() < 1e-12


def test_g_loss_vanilla_values():
    assert g_loss_vanilla(Tensor([0.0])).item() == pytest.approx(math.log(2.0), abs=1e-15)
    assert g_loss_vanilla(Tensor([500.0])).item() < 1e-12


def test_g_loss_vanilla_monotone_decreasing():
    g = grad_of(g_loss_vanilla, np.linspace(-5, 5, 7))
    assert np.all(g < 0)


@settings(max_examples=40)
@given(logits, logits)
def test_vanilla_losses_finite_for_extreme_logits(real, fake):
    d = d_loss_vanilla(Tensor(real), Tensor(fake)).item()
    g = g_loss_vanilla(Tensor(fake)).item()
    assert math.isfinite(d) and math.isfinite(g)


def test_d_loss_vanilla_gradient_matches_finite_differences():
    report = ad.finite_diff_check(
        lambda r, f: d_loss_vanilla(r, f), [(6,), (6,)], tolerance=1e-6, seed=3, name="d_vanilla"
    )
    assert report.passed, report


# --- least squares --------------------------------------------------------


def test_d_loss_ls_fixtures():
    assert d_loss_ls(Tensor([1.0, 1.0]), Tensor([0.0, 0.0])).item() == 0.0
    assert d_loss_ls(Tensor([0.5]), Tensor([0.5])).item() == pytest.approx(0.25)


def test_g_loss_ls_fixtures():
    assert g_loss_ls(Tensor([1.0, 1.0])).item() == 0.0
    assert g_loss_ls(Tensor([0.0])).item() == pytest.approx(0.5)
    assert g_loss_ls(Tensor([-1.0])).item() == pytest.approx(2.0)


def test_ls_gradients_match_finite_differences():
    report = ad.finite_diff_check(
        lambda r, f: d_loss_ls(r, f), [(5,), (5,)], tolerance=1e-6, seed=4, name="d_ls"
    )
    assert report.passed, report


def test_g_loss_ls_gradient_sign_flips_at_one():
    g = grad_of(g_loss_ls, [0.0, 0.5, 2.0])
    assert g[0] < 0 and g[1] < 0 and g[2] > 0


# --- wasserstein ----------------------------------------------------------


def test_wasserstein_distance_fixtures():
    a = Tensor([0.3, -0.2, 1.1])
    loss, distance = d_loss_wasserstein(a, Tensor(a.data.copy()))
    assert distance == 0.0 and loss.item() == 0.0
    loss, distance = d_loss_wasserstein(Tensor([1.0, 1.0]), Tensor([0.0, 0.0]))
    assert distance == pytest.approx(1.0) and loss.item() == pytest.approx(-1.0)


@settings(max_examples=40)
@given(logits, st.floats(min_value=-100, max_value=100))
def test_wasserstein_distance_shift_invariant(scores, c):
    base = np.asarray(scores)
    _, d0 = d_loss_wasserstein(Tensor(base), Tensor(base * 0.5 + 1.0))
    _, d1 = d_loss_wasserstein(Tensor(base + c), Tensor(base * 0.5 + 1.0 + c))
    assert d0 == pytest.approx(d1, abs=1e-9)


def test_g_loss_wasserstein_values_and_gradient():
    assert g_loss_wasserstein(Tensor([0.0, 0.0])).item() == 0.0
    assert g_loss_wasserstein(Tensor([2.0, 2.0])).item() == -2.0
    g = grad_of(g_loss_wasserstein, [0.3, -4.0, 9.9, 0.0])
    np.testing.assert_allclose(g, -0.25)


# --- penalty and clipping -------------------------------------------------


def test_l2_penalty_values():
    assert l2_penalty([Tensor([1.0, 2.0])], 0.0).item() == 0.0
    assert l2_penalty([Tensor([2.0])], 0.5).item() == 2.0


def test_l2_penalty_gradient():
    w = Tensor([3.0, -1.0], requires_grad=True)
    w.zero_grad()
    l2_penalty([w], 0.1).backward()
    np.testing.assert_allclose(w.grad, [0.6, -0.2])


def test_l2_penalty_rejects_negative_weight():
    with pytest.raises(ValueError):
        l2_penalty([Tensor([1.0])], -1.0)


def test_clip_weights_fixtures():
    p = Tensor([0.05, -0.03, 0.01])
    clip_weights([p], 0.02)
    np.testing.assert_array_equal(p.data, [0.02, -0.02, 0.01])


def test_clip_weights_bound_is_exact():
    rng = np.random.default_rng(0)
    params = [Tensor(rng.normal(size=(50,)), requires_grad=True) for _ in range(4)]
    clip_weights(params, 0.02)
    for p in params:
        assert np.abs(p.data).max() <= 0.02


def test_clip_weights_rejects_non_positive_bound():
    with pytest.raises(ValueError):
        clip_weights([Tensor([1.0])], 0.0)


# --- lipschitz probe ------------------------------------------------------


def test_lipschitz_probe_zero_discriminator():
    disc = build_discriminator("wasserstein", init_seed=1, image_size=8)
    for p in disc.parameters():
        p.data[...] = 0.0
    rng = np.random.default_rng(2)
    probe = lipschitz_probe(disc, rng.uniform(size=(3, 8, 8)), rng.uniform(size=(3, 8, 8)))
    assert probe.d_a == 0.0 and probe.ratio == 0.0 and probe.d_x > 0.0


def test_lipschitz_probe_rejects_identical_images():
    disc = build_discriminator("vanilla", init_seed=1, image_size=8)
    img = np.random.default_rng(3).uniform(size=(3, 8, 8))
    with pytest.raises(ValueError, match="identical"):
        lipschitz_probe(disc, img, img.copy())


def test_lipschitz_probe_matches_directional_derivative():
    disc = build_discriminator("vanilla", init_seed=5, image_size=8)
    rng = np.random.default_rng(7)
    x = rng.uniform(0.2, 0.8, size=(3, 8, 8))
    eps = 1e-6
    y = x.copy()
    y[0, 0, 0] += eps
    probe = lipschitz_probe(disc, x, y)
    xt = Tensor(x[None], requires_grad=True)
    xt.zero_grad()
    embed(disc, xt, training=False).backward()
    expected = abs(xt.grad[0, 0, 0, 0])
    assert probe.ratio == pytest.approx(expected, rel=1e-3)


def test_lipschitz_probe_max_ratio_finite_with_clipped_weights():
    disc = build_discriminator("vanilla", init_seed=9, image_size=8)
    clip_weights(disc.parameters(), 0.02)
    rng = np.random.default_rng(11)
    ratios = []
    for _ in range(1000):
        x = rng.uniform(size=(3, 8, 8))
        y = rng.uniform(size=(3, 8, 8))
        probe = lipschitz_probe(disc, x, y)
        ratios.append(probe.ratio)
    peak = max(ratios)
    assert math.isfinite(peak)
    print(f"max embedding/pixel distance ratio over 1000 clipped pairs: {peak:.6f}")


def test_objective_kind_round_trip():
    assert ObjectiveKind("vanilla") is ObjectiveKind.VANILLA
    assert ObjectiveKind("least-squares").value == "least-squares"
    with pytest.raises(ValueError):
        ObjectiveKind("hinge")
