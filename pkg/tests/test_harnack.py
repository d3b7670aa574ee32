import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from harnacklab.core import DomainError, EllipticityParams, Grid, ScalarField, intrinsic_rescale
from harnacklab.harnack import (HarnackConfig, density_check, example_waiting_time_closed_form,
                                find_barrier_params, find_propagation_constants, harnack_ratios,
                                level_set_decay, propagation_check, sufficient_condition, waiting_time_scan,
                                weak_harnack_ratio, weak_harnack_sweep)
from harnacklab.solutions import BarenblattSpec, BarrierSpec, barenblatt_eval, barrier_residual_terms

P3 = EllipticityParams(1.0, 1.0, 3.0, 1)


def barenblatt_field(lo, hi, t0, t1, dx, dt, shift=0.0, scale=1.0, center=0.0):
    g = Grid.from_bounds([lo], [hi], dx, t0, t1, dt)
    X, T = g.mesh()
    spec = BarenblattSpec(P3)
    return ScalarField(g, scale * barenblatt_eval(spec, X - center, scale ** (P3.p - 2) * T + shift).value)


def constant_field(c, lo=-3.0, hi=3.0, t0=-3.0, t1=3.0, dx=1 / 16, dt=1 / 256):
    g = Grid.from_bounds([lo], [hi], dx, t0, t1, dt)
    return ScalarField(g, np.full(g.shape, c))


# --- ratios on simple fields --------------------------------------------------------------


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
def test_constants_give_unit_ratios(c):
    u = constant_field(c)
    cfg = HarnackConfig(c_weak=c, c1_h=0.5 * c, c2_h=c)
    w = weak_harnack_ratio(u, [0.0], 0.0, 0.25, cfg, P3)
    assert w.ratio == 1.0
    for e, r in weak_harnack_sweep(u, [0.0], 0.0, 0.25, cfg, P3):
        assert r == 1.0
    h = harnack_ratios(u, [0.0], 0.0, 0.25, cfg, P3)
    assert (h.sup_ratio, h.inf_ratio) == (1.0, 1.0)
    assert h.theta1 == pytest.approx(0.5) and h.theta2 == pytest.approx(1.0)


def test_weak_ratio_requires_positive_anchor_and_domain():
    u = constant_field(0.0)
    with pytest.raises(DomainError):
        weak_harnack_ratio(u, [0.0], 0.0, 0.25, HarnackConfig(), P3)
    v = constant_field(1.0, t0=-0.125)
    with pytest.raises(DomainError, match="needs the field to cover"):
        weak_harnack_ratio(v, [0.0], 0.0, 0.25, HarnackConfig(), P3)


def test_weak_ratio_monotone_in_eps():
    u = barenblatt_field(-2, 2, 1.0, 3.0, 1 / 64, 1 / 64)
    ratios = [r for _, r in weak_harnack_sweep(u, [0.0], 2.0, 0.25, HarnackConfig(), P3)]
    assert all(b >= a - 1e-15 for a, b in zip(ratios, ratios[1:]))


def test_hypothesis_cylinder_flag_and_strict_mode():
    u = constant_field(1.0, t0=-1.0, t1=1.0)
    cfg = HarnackConfig(c1_h=0.5, c2_h=0.5)
    h = harnack_ratios(u, [0.0], 0.0, 0.25, cfg, P3)
    assert h.hypotheses_in_domain
    # a 4 rho ball no longer fits
    h = harnack_ratios(u, [2.5], 0.0, 0.25, cfg, P3)
    assert not h.hypotheses_in_domain
    with pytest.raises(DomainError):
        harnack_ratios(u, [2.5], 0.0, 0.25, cfg, P3, strict=True)


def test_zero_infimum_gives_infinite_ratio():
    u = barenblatt_field(-1, 7, 0.5, 20.0, 1 / 32, 1 / 32)
    cfg = HarnackConfig(c1_h=0.01, c2_h=0.01)
    assert math.isinf(harnack_ratios(u, [3.0], 1.0, 0.5, cfg, P3).inf_ratio)


# --- intrinsic scaling invariance ---------------------------------------------------------


def test_weak_ratio_invariant_under_rescaling():
    u = barenblatt_field(-2, 2, 1.0, 3.0, 1 / 64, 1 / 64)
    r, M = 2.0, 2.0
    tau = r ** 3 / M
    v = intrinsic_rescale(u, r, M, P3)
    cfg = HarnackConfig(c_weak=1.0)
    # theta absorbs the amplitude factor, so the constant itself is unchanged
    for eps in (0.1, 0.5, 1.0):
        a = weak_harnack_ratio(u, [0.0], 2.0, 0.25, cfg, P3, eps)
        b = weak_harnack_ratio(v, [0.0], 2.0 / tau, 0.25 / r, cfg, P3, eps)
        assert a.nodes == b.nodes
        assert b.ratio == pytest.approx(a.ratio, abs=1e-10)


def test_harnack_ratios_invariant_under_rescaling_across_transition():
    u = barenblatt_field(-1, 7, 0.5, 20.0, 1 / 32, 1 / 32)
    r, M = 2.0, 2.0
    tau = r ** 3 / M
    v = intrinsic_rescale(u, r, M, P3)
    pattern = []
    for c2 in (0.01, 0.02, 0.03, 0.05, 0.1, 0.3):
        a = harnack_ratios(u, [3.0], 1.0, 0.5, HarnackConfig(c1_h=0.01, c2_h=c2), P3)
        b = harnack_ratios(v, [1.5], 1.0 / tau, 0.25, HarnackConfig(c1_h=0.01, c2_h=c2), P3)
        assert b.sup_ratio == pytest.approx(a.sup_ratio, abs=1e-10)
        if math.isinf(a.inf_ratio):
            assert math.isinf(b.inf_ratio)
        else:
            assert b.inf_ratio == pytest.approx(a.inf_ratio, rel=1e-10)
        pattern.append(math.isinf(a.inf_ratio))
    # the future cylinder leaves the support for small c2 and enters it past a threshold
    assert pattern[0] and not pattern[-1]


# --- propagation, decay, density ----------------------------------------------------------


def test_propagation_with_half_level_constant():
    cfg = HarnackConfig(m0=0.5, L0=1.0)
    u = constant_field(0.25, dx=1 / 64)
    res = propagation_check(u, [0.5], -1.0, 1, cfg, P3)
    assert res.found and res.value == 0.25 and res.threshold == 0.5
    pc = find_propagation_constants([u], cfg, P3)
    assert pc.found and pc.L0 == 1.0 and pc.worst_value == 0.25


def test_propagation_preconditions():
    cfg = HarnackConfig(m0=0.5)
    u = constant_field(0.25, dx=1 / 64)
    with pytest.raises(DomainError):
        propagation_check(u, [0.5], -1.0, 0, cfg, P3)
    with pytest.raises(DomainError):
        propagation_check(u, [0.5], -0.25, 1, cfg, P3)
    with pytest.raises(DomainError):
        propagation_check(u, [1.5], -1.0, 1, cfg, P3)
    with pytest.raises(DomainError):
        propagation_check(constant_field(1.0, dx=1 / 64), [0.5], -1.0, 1, cfg, P3)
    with pytest.raises(DomainError, match="refine"):
        propagation_check(u, [0.5 + 1 / 128], -1.0 + 32.0 ** -6, 2, cfg, P3)


def test_propagation_fails_for_large_values():
    cfg = HarnackConfig(m0=0.5, L0=2.0)
    g = Grid.from_bounds([-3], [3], 1 / 64, -3.0, 1.0, 1 / 16)
    X, T = g.mesh()
    u = ScalarField(g, np.broadcast_to(np.where(T < -0.4, 5.0, 0.25) + 0 * X[..., 0], g.shape).copy())
    res = propagation_check(u, [0.0], -1.0, 1, cfg, P3)
    assert not res.found and res.value == 5.0
    pc = find_propagation_constants([u], cfg, P3, L0_grid=[1.0, 5.0, 20.0])
    assert pc.found and pc.L0 == 20.0
    assert not find_propagation_constants([u], cfg, P3, L0_grid=[1.0, 5.0]).found


def test_density_bound_in_one_dimension():
    u = constant_field(0.25, t0=-2.5, t1=0.5, dx=1 / 32, dt=1 / 32)
    d = density_check(u, 0.5, 4.0, P3)
    assert d.bound == pytest.approx(0.125)
    assert d.measure == 0.0 and d.passed
    vals = u.values.copy()
    vals[:, : u.grid.time_index(-0.5)] = 3.0
    hot = ScalarField(u.grid, vals)
    d = density_check(hot, 0.5, 4.0, P3)
    assert d.measure == pytest.approx(2.0, rel=0.05) and not d.passed


def test_decay_matches_geometric_profile():
    # u = m0 L^{-log2 |x|}: the level set above L^k m0 is |x| < 2^-k, measure 2^{1-k} per unit time
    g = Grid.from_bounds([-1.5], [1.5], 2.0 ** -14, -2.5, 0.0, 1 / 8)
    X, T = g.mesh()
    m0, L = 0.5, 3.0
    ax = np.maximum(np.abs(X[..., 0]), 2.0 ** -40)
    u = ScalarField(g, np.broadcast_to(m0 * L ** (-np.log2(ax)) + 0 * T, g.shape).copy())
    tab = level_set_decay(u, m0, L, 6)
    assert tab.monotone and not tab.degenerate
    # open level set {|x| < 2^-k} holds 2^{1-k} / dx - 1 nodes
    np.testing.assert_allclose(tab.measures, 2.0 ** (1 - tab.k) - g.dx, rtol=1e-12)
    assert tab.eta == pytest.approx(0.5, rel=1e-3)
    assert tab.C == pytest.approx(2.0, rel=1e-3)


@settings(deadline=None, max_examples=30)
@given(st.integers(0, 2 ** 31 - 1), st.floats(1.1, 8.0), st.integers(1, 6))
def test_decay_is_monotone(seed, L, k_max):
    g = Grid.from_bounds([-1.25], [1.25], 1 / 32, -2.5, 0.0, 1 / 32)
    u = ScalarField(g, np.random.default_rng(seed).exponential(size=g.shape))
    tab = level_set_decay(u, 0.5, L, k_max)
    assert tab.monotone
    assert len(tab.measures) == k_max
    assert np.all(tab.measures >= 0)


def test_decay_degenerate_flag():
    tab = level_set_decay(constant_field(0.1, t0=-2.5, t1=0.5), 0.5, 2.0, 4)
    assert tab.degenerate and tab.eta == 0.0 and np.all(tab.measures == 0)


# --- barrier --------------------------------------------------------------------------


@settings(deadline=None, max_examples=40)
@given(st.floats(2.0, 30.0), st.floats(1e-6, 0.15), st.floats(0.0, 0.2499), st.floats(0.25, 4.0))
def test_barrier_is_strict_subsolution_on_flat_region(q, alpha, s, t):
    params = EllipticityParams(1.0, 2.0, 3.0, 1)
    spec = BarrierSpec(q, alpha, params)
    x = np.array([[1.5 * s * t ** alpha]])
    dt, dif = barrier_residual_terms(spec, x, t)
    assert dif[0] == pytest.approx(0.0, abs=1e-300)
    assert dt[0] - dif[0] < 0


def test_sufficient_condition_threshold():
    params = EllipticityParams(1.0, 2.0, 3.0, 2)
    # (4/9)(q + 1 - 2) >= 1  iff  q >= 13/4
    assert not sufficient_condition(params, 3.2)
    assert sufficient_condition(params, 3.25)
    assert sufficient_condition(P3, 2.0)  # (4/9) 3 >= 1


def test_barrier_scan_unit_ellipticity():
    scan = find_barrier_params(P3, samples=20000)
    assert scan.feasible
    assert scan.q == pytest.approx(2.0)
    assert 0 < scan.alpha <= 1 / 6
    assert scan.worst_residual < 0
    assert scan.sufficient_condition and scan.edge_sign_condition
    assert scan.table.shape == (len(scan.q_grid), len(scan.alpha_grid))


# --- waiting time ---------------------------------------------------------------------


@pytest.mark.parametrize("C0", [512.0, 1024.0, 4096.0])
def test_waiting_time_matches_closed_form(C0):
    (row,) = waiting_time_scan(3.0, [C0])
    assert row.bracket_ok
    assert row.theta1 == pytest.approx(example_waiting_time_closed_form(3.0, C0, 2.0), rel=1e-6)
    assert row.bound == pytest.approx(512.0 / C0)


def test_waiting_time_shrinks_with_C0():
    rows = waiting_time_scan(3.0, [512.0, 1024.0, 2048.0, 4096.0])
    th = [r.theta1 for r in rows]
    assert all(b < a for a, b in zip(th, th[1:]))
    assert th[0] / th[-1] == pytest.approx(8.0, rel=1e-6)


# --- configuration --------------------------------------------------------------------


@pytest.mark.parametrize("bad", [dict(c_weak=0.0), dict(m0=-1.0), dict(nu=1.0), dict(rho0=1.0),
                                 dict(c1_h=2.0, c2_h=1.0), dict(k_max=0)])
def test_config_validation(bad):
    with pytest.raises(DomainError):
        HarnackConfig(**bad)
