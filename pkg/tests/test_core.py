import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from harnacklab.core import (Cylinder, DomainError, EllipticityParams, Grid, ParaboloidSet, ScalarField,
                             cylinder_contains, intrinsic_rescale, read_field_binary, region_measure,
                             rescaled_grid, theta_from_value, time_factor, unit_ball_volume,
                             write_field_binary, write_field_csv)
from harnacklab.solutions import BarenblattSpec, barenblatt_eval

P3 = EllipticityParams(1.0, 1.0, 3.0, 1)


# --- params and grids ---------------------------------------------------------------


def test_params_invariants():
    with pytest.raises(DomainError, match="lambda <= Lambda"):
        EllipticityParams(2.0, 1.0, 3.0)
    with pytest.raises(DomainError):
        EllipticityParams(0.0, 1.0, 3.0)
    with pytest.raises(DomainError):
        EllipticityParams(1.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        EllipticityParams(1.0, 1.0, 3.0, 0)
    EllipticityParams(1.0, 1.0, 1.5)  # p > 1 allowed at construction
    with pytest.raises(DomainError):
        EllipticityParams(1.0, 1.0, 1.5).require_degenerate()


def test_grid_invariants():
    with pytest.raises(DomainError):
        Grid((0.0,), (1.0,), 0.0, 0, 1, 0.1)
    with pytest.raises(DomainError):
        Grid((0.0,), (1.0,), 0.1, 1, 1, 0.1)
    with pytest.raises(DomainError):
        Grid((0.0,), (0.05,), 0.1, 0, 1, 0.1)  # two nodes only
    with pytest.raises(DomainError):
        Grid((0.0,), (1.0,), 0.3, 0, 1, 0.1)  # extent not a multiple of dx


def test_grid_geometry():
    g = Grid((0.0, 1.0), (1.0, 0.5), 0.25, -1.0, 0.0, 0.5)
    assert g.counts == (9, 5)
    assert g.nt == 3
    np.testing.assert_allclose(g.axis(1), [0.5, 0.75, 1.0, 1.25, 1.5])
    np.testing.assert_allclose(g.times, [-1.0, -0.5, 0.0])
    assert g.space_index([0.25, 1.0]) == (5, 2)
    assert g.time_index(-0.5) == 1
    with pytest.raises(DomainError):
        g.time_index(-0.25)
    assert g.spatial_mesh().shape == (9, 5, 2)


def test_unit_ball_volume():
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)


def test_field_rejects_nonfinite_and_bad_shape():
    g = Grid((0.0,), (1.0,), 0.5, 0, 1, 0.5)
    with pytest.raises(DomainError):
        ScalarField(g, np.zeros((4, 3)))
    vals = np.zeros(g.shape)
    vals[0, 0] = np.nan
    with pytest.raises(DomainError):
        ScalarField(g, vals)


# --- cylinders ------------------------------------------------------------------------


def test_cylinder_examples():
    c = Cylinder((0.0,), 0.0, 1.0, 1.0, "past")
    assert cylinder_contains(c, (0.0, 0.0), P3)
    assert not cylinder_contains(c, (0.0, -1.0), P3)
    c2 = Cylinder((0.0,), 0.0, 2.0, 0.5, "past")
    assert cylinder_contains(c2, (0.0, -3.9), P3)
    assert not cylinder_contains(c2, (0.0, -4.0), P3)


def test_future_and_full_conventions():
    f = Cylinder((0.0,), 0.0, 1.0, 1.0, "future")
    assert cylinder_contains(f, (0.0, 0.0), P3)
    assert not cylinder_contains(f, (0.0, 1.0), P3)
    assert cylinder_contains(f, (0.5, 0.99), P3)
    full = Cylinder((0.0,), 0.0, 1.0, 1.0, "full")
    assert cylinder_contains(full, (0.0, -0.99), P3) and cylinder_contains(full, (0.0, 0.99), P3)
    assert not cylinder_contains(full, (1.0, 0.0), P3)  # open ball


@given(x0=st.floats(-5, 5), t0=st.floats(-5, 5), rho=st.floats(0.01, 3), theta=st.floats(0.01, 3),
       p=st.floats(1.1, 6))
def test_half_open_time_conventions(x0, t0, rho, theta, p):
    params = EllipticityParams(1.0, 1.0, p)
    past = Cylinder((x0,), t0, rho, theta, "past")
    fut = Cylinder((x0,), t0, rho, theta, "future")
    assert cylinder_contains(past, (x0, t0), params)
    assert cylinder_contains(fut, (x0, t0), params)
    assert not cylinder_contains(past, (x0, t0 - theta * rho ** p), params)


# --- measures -------------------------------------------------------------------------


def test_region_measure_full_cylinder():
    g = Grid((0.0,), (1.5,), 0.01, -1.5, 1.5, 0.01)
    m = region_measure(Cylinder((0.0,), 0.0, 1.0, 1.0, "full"), g, P3)
    assert m == pytest.approx(4.0, rel=0.03)


def test_region_measure_outside_is_zero():
    g = Grid((0.0,), (1.0,), 0.05, 0.0, 1.0, 0.05)
    assert region_measure(Cylinder((10.0,), 0.5, 1.0, 1.0, "full"), g, P3) == 0.0


def test_region_measure_paraboloid():
    g = Grid((0.0,), (1.2,), 0.005, 0.0, 1.2, 0.005)
    p2 = EllipticityParams(1.0, 1.0, 2.0)
    m = region_measure(ParaboloidSet((0.0,), 0.0, 1.0, 1.0), g, p2)
    assert m == pytest.approx(4 / 3, rel=0.03)


def test_region_measure_predicate():
    g = Grid((0.0,), (1.0,), 0.1, 0.0, 1.0, 0.1)
    assert region_measure(lambda X, T: np.ones(np.broadcast_shapes(X.shape[:-1], T.shape), bool), g) == \
        pytest.approx(g.counts[0] * g.nt * g.cell_volume)


@given(rho=st.floats(0.1, 1.0), shrink=st.floats(0.1, 1.0), theta=st.floats(0.2, 2.0))
def test_region_measure_monotone(rho, shrink, theta):
    g = Grid((0.0,), (1.0,), 1 / 32, -2.0, 0.0, 1 / 32)
    big = Cylinder((0.0,), 0.0, rho, theta, "past")
    small = Cylinder((0.0,), 0.0, rho * shrink, theta, "past")
    assert region_measure(small, g, P3) <= region_measure(big, g, P3)


# --- scaling ---------------------------------------------------------------------------


def test_theta_examples():
    assert theta_from_value(1.0, 1.0, P3) == 1.0
    assert theta_from_value(1.0, 2.0, EllipticityParams(1, 1, 4.0)) == pytest.approx(0.25)
    assert theta_from_value(0.5, 0.5, P3) == 1.0
    with pytest.raises(DomainError):
        theta_from_value(1.0, 0.0, P3)


@given(c=st.floats(1e-6, 1e6), p=st.floats(1.1, 8))
def test_theta_at_own_value_is_one(c, p):
    assert theta_from_value(c, c, EllipticityParams(1, 1, p)) == pytest.approx(1.0)


def _barenblatt_field(g):
    spec = BarenblattSpec(P3)
    return ScalarField.sample(lambda X, T: barenblatt_eval(spec, X, T).value, g)


def test_rescale_identity():
    g = Grid((0.0,), (2.0,), 0.25, 1.0, 2.0, 0.25)
    u = _barenblatt_field(g)
    v = intrinsic_rescale(u, 1.0, 1.0, P3)
    np.testing.assert_array_equal(v.values, u.values)
    assert v.grid == u.grid


def test_rescale_constant():
    g = Grid((0.0,), (1.0,), 0.25, 0.0, 1.0, 0.25)
    u = ScalarField(g, np.full(g.shape, 2.0))
    v = intrinsic_rescale(u, 1.0, 2.0, P3)
    np.testing.assert_array_equal(v.values, 1.0)
    assert v.grid.dt == pytest.approx(g.dt / time_factor(1.0, 2.0, 3.0))
    assert time_factor(1.0, 2.0, 3.0) == 0.5


def test_rescale_barenblatt_matches_closed_form():
    spec = BarenblattSpec(P3)
    g = Grid((0.0,), (4.0,), 1 / 16, 1.0, 9.0, 1 / 8)
    u = _barenblatt_field(g)
    target = Grid((0.0,), (1.5,), 1 / 32, 0.5, 1.0, 1 / 64)
    v = intrinsic_rescale(u, 2.0, 1.0, P3, target=target)
    X, T = target.mesh()
    direct = barenblatt_eval(spec, 2 * np.broadcast_to(X, target.shape + (1,)), 8 * np.broadcast_to(T, target.shape))
    np.testing.assert_allclose(v.values, direct.value, atol=1e-12, rtol=0)


def test_rescale_rejects_off_node_target_unless_interpolating():
    g = Grid((0.0,), (4.0,), 1 / 16, 1.0, 9.0, 1 / 8)
    u = _barenblatt_field(g)
    target = Grid((0.0,), (1.5,), 0.03, 0.5, 1.0, 1 / 64)
    with pytest.raises(DomainError, match="interpolate"):
        intrinsic_rescale(u, 2.0, 1.0, P3, target=target)
    v = intrinsic_rescale(u, 2.0, 1.0, P3, target=target, interpolate=True)
    spec = BarenblattSpec(P3)
    X, T = target.mesh()
    direct = barenblatt_eval(spec, 2 * np.broadcast_to(X, target.shape + (1,)), 8 * np.broadcast_to(T, target.shape))
    assert np.max(np.abs(v.values - direct.value)) < 5e-3


@given(e1=st.integers(-2, 2), e2=st.integers(-2, 2), f1=st.integers(-2, 2), f2=st.integers(-2, 2),
       p=st.sampled_from([2.5, 3.0, 4.0]))
def test_rescale_composes(e1, e2, f1, f2, p):
    params = EllipticityParams(1, 1, p)
    r1, r2, M1, M2 = 2.0 ** e1, 2.0 ** e2, 2.0 ** f1, 2.0 ** f2
    g = Grid((0.0,), (1.0,), 0.25, 0.0, 1.0, 0.25)
    u = ScalarField(g, np.random.default_rng(0).uniform(0, 1, g.shape))
    a = intrinsic_rescale(intrinsic_rescale(u, r1, M1, params), r2, M2, params)
    b = intrinsic_rescale(u, r1 * r2, M1 * M2, params)
    np.testing.assert_array_equal(a.values, b.values)
    for x, y in zip((a.grid.dx, a.grid.dt, a.grid.t_start), (b.grid.dx, b.grid.dt, b.grid.t_start)):
        assert x == pytest.approx(y, rel=1e-12)


def test_rescaled_grid_maps_nodes():
    g = Grid((0.5,), (1.0,), 0.25, 1.0, 2.0, 0.5)
    h = rescaled_grid(g, 2.0, 4.0, 3.0)
    np.testing.assert_allclose(h.axis(0) * 2.0, g.axis(0))
    np.testing.assert_allclose(h.times * time_factor(2.0, 4.0, 3.0), g.times)


# --- serialization ---------------------------------------------------------------------


def test_binary_roundtrip(tmp_path):
    g = Grid((0.0, 1.0), (1.0, 0.5), 0.25, -1.0, 0.0, 0.5)
    u = ScalarField(g, np.random.default_rng(1).normal(size=g.shape))
    write_field_binary(tmp_path / "f.bin", u)
    v = read_field_binary(tmp_path / "f.bin")
    assert v.grid == g
    np.testing.assert_array_equal(v.values, u.values)


def test_binary_rejects_garbage(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"nope" + b"\0" * 40)
    with pytest.raises(DomainError):
        read_field_binary(tmp_path / "x.bin")


def test_csv_layout(tmp_path):
    g = Grid((0.0,), (0.5,), 0.5, 0.0, 1.0, 1.0)
    u = ScalarField(g, np.arange(6.0).reshape(3, 2))
    write_field_csv(tmp_path / "f.csv", u)
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "x1,t,value"
    assert len(lines) == 7
    assert lines[1].split(",") == ["-0.5", "0.0", "0.0"]
