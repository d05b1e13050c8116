import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from statloss.class_stats import ClassBatch, batch_stats
from statloss.errors import ConfigError, DegenerateClass
from statloss.gradcheck import max_relative_error, random_batches
from statloss.stat_loss import (
    LossConfig,
    finite_difference_grads,
    grad_l0_exact,
    grad_l0_paper,
    grad_ldiv_exact,
    grad_ldiv_paper,
    grad_total,
    loss_l0,
    loss_ldiv,
    loss_total,
    loss_value,
    shift_batches,
)


def one_d(*groups):
    return [ClassBatch(k, np.array(g, dtype=float).reshape(-1, 1)) for k, g in enumerate(groups)]


def stats_of(batches):
    return [batch_stats(b) for b in batches]


NO_RIDGE = dict(ridge_eps=0.0)


def test_config_validation():
    with pytest.raises(ConfigError):
        LossConfig(delta=0.0)
    with pytest.raises(ConfigError):
        LossConfig(lam=-1.0)
    with pytest.raises(ConfigError):
        LossConfig(grad_mode="autodiff")


def test_loss_l0_examples():
    assert loss_l0(stats_of(one_d([0, 2]))) == 2
    assert loss_l0(stats_of(one_d([1, 1], [3, 3, 3]))) == 0
    assert loss_l0(stats_of(one_d([0, 2], [0, 2, 4]))) == 3


def test_loss_ldiv_examples():
    two = stats_of(one_d([0, 2], [4, 6]))
    assert loss_ldiv(two, LossConfig(delta=10.0, **NO_RIDGE)) == pytest.approx(4.0, abs=1e-12)
    same = stats_of(one_d([0, 2], [-1, 3]))
    assert loss_ldiv(same, LossConfig(delta=10.0, **NO_RIDGE)) == 20.0
    assert loss_ldiv(two, LossConfig(delta=5.0, hinge=True, **NO_RIDGE)) == 0.0
    assert loss_ldiv(stats_of(one_d([0, 2])), LossConfig()) == 0.0
    with pytest.raises(DegenerateClass):
        loss_ldiv(stats_of(one_d([0, 2], [4])), LossConfig())


def test_loss_total_examples():
    b = one_d([0, 2], [4, 6])
    rep = loss_total(b, LossConfig(lam=0.5, delta=10.0, **NO_RIDGE))
    assert rep.l0 == 2.0
    assert rep.l_div == pytest.approx(4.0, abs=1e-12)
    assert rep.total == pytest.approx(4.0, abs=1e-12)
    assert rep.pair_t2[(0, 1)] == pytest.approx(8.0, abs=1e-12)
    assert rep.pair_t2[(0, 1)] == rep.pair_t2[(1, 0)]

    assert loss_total(b, LossConfig(lam=0.0)).total == loss_total(b, LossConfig(lam=0.0)).l0

    single = loss_total(one_d([0, 2]), LossConfig(lam=0.01))
    assert single.l_div == 0 and single.total == single.l0
    assert single.warnings


def test_loss_total_excludes_singleton_classes():
    rep = loss_total(one_d([0, 2], [5], [4, 6]), LossConfig(lam=0.5, **NO_RIDGE))
    assert rep.l0 == 2.0
    assert (1, 0) not in rep.pair_t2 and (0, 2) in rep.pair_t2
    assert np.all(rep.grads[1] == 0)
    assert any("excluded" in w for w in rep.warnings)


def test_grad_l0_examples():
    b = one_d([0, 2])
    s = stats_of(b)
    assert grad_l0_paper(b, s)[0][0, 0] == -1.0
    assert grad_l0_exact(b, s)[0][0, 0] == -2.0
    b2 = one_d([0, 2], [7, 9])
    assert grad_l0_paper(b2, stats_of(b2))[0][0, 0] == -0.5
    at_mean = one_d([1, 1, 1])
    assert np.all(grad_l0_paper(at_mean, stats_of(at_mean))[0] == 0)
    assert np.all(grad_l0_exact(at_mean, stats_of(at_mean))[0] == 0)


def test_grad_l0_exact_matches_fd_in_1d():
    b = one_d([0, 2])
    fd = finite_difference_grads(lambda bs: loss_l0(stats_of(bs)), b)
    assert fd[0][0, 0] == pytest.approx(-2.0, abs=1e-8)


@pytest.mark.parametrize("seed", range(10))
def test_paper_l0_is_scaled_exact(seed):
    b = random_batches(np.random.default_rng(seed))
    s = stats_of(b)
    for gp, ge, st_ in zip(grad_l0_paper(b, s), grad_l0_exact(b, s), s):
        assert np.max(np.abs(gp - (st_.count - 1) / st_.count * ge)) <= 1e-12


def _eq34_scalar(z_class, other, i):
    # scalar transcription of the published L_div gradient for 1-D features,
    # one ordered pair (k, t), sample i of class k, trailing Gamma contracted
    nk, nt = len(z_class), len(other)
    ck, ct = sum(z_class) / nk, sum(other) / nt
    sk = sum((z - ck) ** 2 for z in z_class)
    st_ = sum((z - ct) ** 2 for z in other)
    inv = 1.0 / (sk + st_)
    gamma = ck - ct
    coef = (nk + nt - 2) / (1.0 / nk + 1.0 / nt)
    z = z_class[i]
    shrink = (nk - 1) / nk
    return coef * (-(2.0 / nk) * inv * gamma
                   + shrink * (gamma * inv * z) * inv * gamma
                   + shrink * inv * gamma * z * inv * gamma)


def test_grad_ldiv_paper_transcription_1d():
    b = one_d([0, 2], [4, 6])
    cfg = LossConfig(**NO_RIDGE)
    g = grad_ldiv_paper(b, stats_of(b), cfg)
    assert g[0][0, 0] == pytest.approx(2.0, abs=1e-12)
    for i in range(2):
        assert g[0][i, 0] == pytest.approx(_eq34_scalar([0, 2], [4, 6], i), rel=1e-12)
        assert g[1][i, 0] == pytest.approx(_eq34_scalar([4, 6], [0, 2], i), rel=1e-12)


def test_grad_ldiv_vanishes_when_means_coincide():
    b = one_d([-1, 1], [-3, 3])
    s = stats_of(b)
    cfg = LossConfig()
    for g in grad_ldiv_paper(b, s, cfg) + grad_ldiv_exact(b, s, cfg):
        assert np.max(np.abs(g)) <= 1e-8


def test_grad_ldiv_exact_golden_1d():
    # T^2(z) = (z-8)^2 / ((z-2)^2 + 4) for class {z, 2} vs {4, 6}; dT^2/dz = 2 at z=0,
    # so d/dz of 2 * (delta - T^2) is -4
    b = one_d([0, 2], [4, 6])
    cfg = LossConfig(**NO_RIDGE)
    g = grad_ldiv_exact(b, stats_of(b), cfg)
    assert g[0][0, 0] == pytest.approx(-4.0, abs=1e-12)
    fd = finite_difference_grads(lambda bs: loss_ldiv(stats_of(bs), cfg), b)
    assert fd[0][0, 0] == pytest.approx(-4.0, abs=1e-8)
    assert max_relative_error(g, fd) <= 1e-6


def test_grad_ldiv_exact_zero_when_hinge_active_everywhere():
    b = one_d([0, 2], [40, 42])
    cfg = LossConfig(delta=1.0, hinge=True)
    for g in grad_ldiv_exact(b, stats_of(b), cfg) + grad_ldiv_paper(b, stats_of(b), cfg):
        assert np.all(g == 0)
    fd = finite_difference_grads(lambda bs: loss_ldiv(stats_of(bs), cfg), b)
    assert all(np.all(f == 0) for f in fd)


def test_lambda_linearity_and_zero_lambda():
    rng = np.random.default_rng(3)
    b = random_batches(rng, full_rank=True)
    s = stats_of(b)
    base = LossConfig(lam=1.0)
    for mode in ("paper", "exact"):
        r0 = grad_total(b, LossConfig(lam=0.0, grad_mode=mode))
        l0_grads = grad_l0_paper(b, s) if mode == "paper" else grad_l0_exact(b, s)
        for a, c in zip(r0.grads, l0_grads):
            assert np.array_equal(a, c)
        div = grad_ldiv_paper(b, s, base) if mode == "paper" else grad_ldiv_exact(b, s, base)
        r = grad_total(b, LossConfig(lam=0.25, grad_mode=mode))
        for a, g0, gd in zip(r.grads, l0_grads, div):
            np.testing.assert_allclose(a, g0 + 0.25 * gd, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("seed", range(12))
@pytest.mark.parametrize("ridge", [None, 0.1])
def test_exact_total_gradient_matches_fd(seed, ridge):
    rng = np.random.default_rng(seed)
    b = random_batches(rng)
    cfg = LossConfig(lam=1.0, grad_mode="exact", ridge_eps=ridge)
    g = loss_total(b, cfg).grads
    fd = finite_difference_grads(lambda bs: loss_value(bs, cfg), b)
    assert max_relative_error(g, fd) <= 1e-4


@pytest.mark.parametrize("seed", range(10))
def test_exact_mode_descends(seed):
    b = random_batches(np.random.default_rng(50 + seed))
    cfg = LossConfig(grad_mode="exact")
    rep = loss_total(b, cfg)
    assert loss_value(shift_batches(b, rep.grads, 1e-4), cfg) < rep.total


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), lam=st.floats(0, 2))
def test_additivity_and_l0_nonnegative(seed, lam):
    b = random_batches(np.random.default_rng(seed))
    rep = loss_total(b, LossConfig(lam=lam), with_grads=False)
    assert rep.l0 >= 0
    assert rep.total == pytest.approx(rep.l0 + lam * rep.l_div, abs=1e-12 * max(1, abs(rep.total)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), shift=st.floats(-50, 50))
def test_l0_translation_invariant(seed, shift):
    rng = np.random.default_rng(seed)
    b = random_batches(rng)
    moved = list(b)
    moved[0] = ClassBatch(b[0].class_id, b[0].features + shift)
    assert loss_l0(stats_of(moved)) == pytest.approx(loss_l0(stats_of(b)), abs=1e-10 * max(1, abs(shift)))


@settings(max_examples=30, deadline=None)
@given(t2s=st.lists(st.floats(0, 30), min_size=2, max_size=2))
def test_hinge_monotone_in_t2(t2s):
    # two 1-D classes with fixed spread; moving the second mean raises T^2 monotonically
    lo, hi = sorted(t2s)
    cfg = LossConfig(delta=10.0, hinge=True, ridge_eps=0.0)

    def ldiv_at(t2):
        # T^2 = 2 * gap^2 / 4 for {0,2} vs {gap, gap+2} shifted by 1 => gap = sqrt(2 * t2)
        gap = np.sqrt(2.0 * t2)
        return loss_ldiv(stats_of(one_d([0, 2], [gap, gap + 2])), cfg)

    assert ldiv_at(hi) <= ldiv_at(lo) + 1e-12
