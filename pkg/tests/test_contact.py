import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from harnacklab.contact import (ParameterSet, basic_measure_estimate, contact_map_check, contact_set_measure,
                                find_contact, contact_parameter_box, quantified_measure_estimate)
from harnacklab.core import Cylinder, DomainError, EllipticityParams, Grid, ScalarField, region_measure
from harnacklab.solutions import ContactFnSpec

PARAMS = [EllipticityParams(1.0, 2.0, 3.0, 1), EllipticityParams(0.5, 1.0, 1.5, 1)]
IDS = ["p3", "p1.5"]


def zero_field(n=1, dx=1 / 32, t0=-1.0, t1=0.0, dt=1 / 32):
    g = Grid.from_bounds([-1] * n, [1] * n, dx, t0, t1, dt)
    return ScalarField(g, np.zeros(g.shape))


@pytest.mark.parametrize("params", PARAMS, ids=IDS)
@pytest.mark.parametrize("y,s", [(0.0, -0.5), (0.25, -0.75), (-0.5, -0.25)])
def test_zero_field_contact_at_vertex(params, y, s):
    u = zero_field()
    rec = find_contact(u, ContactFnSpec((y,), s, 16.0, params), tol=0.0)
    assert rec.touched
    assert rec.contact == pytest.approx((y, s), abs=1e-12)
    assert rec.gap == pytest.approx(0.0, abs=1e-12)
    m = contact_map_check(rec, u, 16.0, params)
    assert m.reliable
    assert m.y_residual == pytest.approx(0.0, abs=1e-12)
    assert m.s_residual == pytest.approx(0.0, abs=1e-12)


def test_vertex_after_last_slice_rejected():
    with pytest.raises(DomainError):
        find_contact(zero_field(), ContactFnSpec((0.0,), 0.5, 16.0, PARAMS[0]))
    with pytest.raises(DomainError):
        find_contact(zero_field(), ContactFnSpec((2.0,), -0.5, 16.0, PARAMS[0]))


def test_no_contact_when_field_is_far_above():
    g = Grid.from_bounds([-1], [1], 1 / 16, -1.0, 0.0, 1 / 16)
    u = ScalarField(g, np.full(g.shape, 100.0))
    rec = find_contact(u, ContactFnSpec((0.0,), -0.9, 1.0, PARAMS[0]), tol=0.0)
    assert not rec.touched and rec.contact is None
    with pytest.raises(DomainError):
        contact_map_check(rec, u, 1.0, PARAMS[0])


@settings(deadline=None, max_examples=30)
@given(st.integers(0, 2 ** 31 - 1), st.integers(-8, 8), st.integers(-4, 4), st.sampled_from([0, 1]))
def test_contact_translation_equivariance(seed, kx, kt, which):
    params = PARAMS[which]
    rng = np.random.default_rng(seed)
    g = Grid.from_bounds([-1], [1], 1 / 16, -1.0, 0.0, 1 / 16)
    X, T = g.mesh()
    vals = np.abs(X[..., 0]) + 0.5 * (T + 1) + 0.05 * rng.random(g.shape)
    y = float(rng.integers(-8, 9)) / 16
    s = float(rng.integers(-15, -4)) / 16
    hx, ht = kx / 16, kt / 16
    g2 = Grid.from_bounds([-1 + hx], [1 + hx], 1 / 16, -1.0 + ht, ht, 1 / 16)
    a = 4.0
    r1 = find_contact(ScalarField(g, vals), ContactFnSpec((y,), s, a, params))
    r2 = find_contact(ScalarField(g2, vals), ContactFnSpec((y + hx,), s + ht, a, params))
    assert r1.touched == r2.touched
    if r1.touched:
        assert r1.index == r2.index
        assert r2.contact[0] == pytest.approx(r1.contact[0] + hx, abs=1e-12)
        assert r2.contact[1] == pytest.approx(r1.contact[1] + ht, abs=1e-12)


@pytest.mark.parametrize("params", PARAMS, ids=IDS)
def test_contact_map_recovers_parameter_for_smooth_field(params):
    # u = 1 + 0.2 x^2 + 0.1 t is convex in x, so every vertex near the middle touches once
    g = Grid.from_bounds([-1], [1], 1 / 512, -1.0, 0.0, 1 / 512)
    X, T = g.mesh()
    u = ScalarField(g, 1 + 0.2 * X[..., 0] ** 2 + 0.1 * T)
    a = 16.0
    for y, s in [(0.0, -0.3), (0.05, -0.25), (-0.03, -0.2)]:
        rec = find_contact(u, ContactFnSpec((y,), s, a, params))
        assert rec.touched and not rec.on_boundary
        m = contact_map_check(rec, u, a, params)
        assert m.reliable
        assert m.y_residual < 0.02
        assert m.s_residual < 0.02


@pytest.mark.parametrize("params", PARAMS, ids=IDS)
def test_single_parameter_contact_measure(params):
    u = zero_field()
    E = ParameterSet(np.array([[0.0, -0.5]]), 1e-3)
    g = u.grid
    for dil, cells in [(0, 1), (1, 9), (2, 25)]:
        cm = contact_set_measure(u, E, 16.0, dilation=dil, params=params, tol=0.0)
        assert cm.untouched == 0
        assert cm.gamma_measure == pytest.approx(cells * g.cell_volume)
        assert cm.ratio == pytest.approx(cm.gamma_measure / 1e-3)
    with pytest.raises(DomainError):
        contact_set_measure(u, E, 16.0, dilation=-1, params=params)


def test_parameter_set_lattice():
    E = ParameterSet.ball_times_interval([0.0], 0.5, 0.0, 1.0, 0.25, 0.5)
    assert len(E) == 5 * 3
    assert E.measure == pytest.approx(15 * 0.125)
    with pytest.raises(DomainError):
        ParameterSet(np.array([[0.0, 0.0], [0.0, 0.0]]), 1.0)
    B = contact_parameter_box(PARAMS[0], 1 / 64, 16.0 ** -3 / 4)
    assert np.all(np.abs(B.samples[:, 0]) <= 1 / 16 + 1e-15)
    assert B.samples[:, 1].min() == pytest.approx(-4 * 16.0 ** -3)
    assert B.samples[:, 1].max() == pytest.approx(-2 * 16.0 ** -3)


# --- measure estimates --------------------------------------------------------------------


@pytest.mark.parametrize("params", PARAMS, ids=IDS)
def test_basic_measure_of_zero_is_full_cylinder(params):
    g = Grid.from_bounds([-1.5], [1.5], 1 / 32, -1.5, 0.5, 1 / 32)
    u = ScalarField(g, np.zeros(g.shape))
    full = region_measure(Cylinder(np.zeros(1), 0.0, 1.0, 1.0, "past"), g, params)
    assert basic_measure_estimate(u, params) == pytest.approx(full)
    assert full == pytest.approx(2.0, rel=0.05)


def test_basic_measure_of_parabola_matches_closed_form():
    params = PARAMS[0]
    g = Grid.from_bounds([-1.5], [1.5], 1 / 256, -1.5, 0.5, 1 / 64)
    X, T = g.mesh()
    u = ScalarField(g, np.broadcast_to(10 * X[..., 0] ** 2, g.shape).copy())
    # {10 x^2 < 4} within B_1, for a unit time span
    assert basic_measure_estimate(u, params) == pytest.approx(2 * np.sqrt(0.4), rel=0.02)


def test_basic_measure_preconditions():
    params = PARAMS[0]
    g = Grid.from_bounds([-1.5], [1.5], 1 / 32, -1.5, 0.5, 1 / 32)
    with pytest.raises(DomainError):
        basic_measure_estimate(ScalarField(g, np.full(g.shape, 1.5)), params)
    neg = np.zeros(g.shape)
    neg[g.space_index([0.25]) + (g.time_index(-0.5),)] = -1.0
    with pytest.raises(DomainError):
        basic_measure_estimate(ScalarField(g, neg), params)
    small = Grid.from_bounds([-0.5], [0.5], 1 / 32, -1.5, 0.5, 1 / 32)
    with pytest.raises(DomainError):
        basic_measure_estimate(ScalarField(small, np.zeros(small.shape)), params)


@settings(deadline=None, max_examples=25)
@given(st.floats(0.5, 4.0), st.floats(0.5, 4.0), st.integers(0, 2 ** 31 - 1))
def test_quantified_measure_monotone_in_level(L_a, L_b, seed):
    params = PARAMS[0]
    g = Grid.from_bounds([-1.25], [1.25], 1 / 32, -1.0, 0.25, 1 / 32)
    X, T = g.mesh()
    rng = np.random.default_rng(seed)
    u = ScalarField(g, 0.2 + rng.random() * X[..., 0] ** 2 + 0 * T + 0.3 * rng.random(g.shape))
    lo, hi = sorted((L_a, L_b))
    m_lo, bound = quantified_measure_estimate(u, [0.0], 0.5, 1.0, lo, params)
    m_hi, _ = quantified_measure_estimate(u, [0.0], 0.5, 1.0, hi, params)
    assert m_lo <= m_hi
    assert bound == pytest.approx(1e-3 * 0.5 ** 4)


def test_quantified_measure_preconditions():
    params = PARAMS[0]
    g = Grid.from_bounds([-1.25], [1.25], 1 / 32, -1.0, 0.25, 1 / 32)
    u = ScalarField(g, np.full(g.shape, 2.0))
    with pytest.raises(DomainError):
        quantified_measure_estimate(u, [0.0], 0.5, 1.0, 1.0, params)  # inf above m0
    with pytest.raises(DomainError):
        quantified_measure_estimate(u, [0.0], 1.5, 4.0, 1.0, params)
    m, _ = quantified_measure_estimate(u, [0.0], 0.5, 2.0, 1.0, params)
    assert m > 0
