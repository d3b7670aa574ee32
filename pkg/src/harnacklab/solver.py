"""Explicit finite-difference stepping for u_t = coeff * |Du|_delta^{p-2} K(D^2 u).

Central gradients, standard second differences on the diagonal of the Hessian and
4-point cross differences off it. The time step is bounded by a data-dependent
CFL condition that is rechecked at every substep.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .core import DomainError, Grid, NumericError, ScalarField
from .operators import OperatorSpec, degenerate_rhs, regularized_norm

Boundary = Literal["dirichlet_from_field", "clamp_last_value"]
MAX_HALVINGS = 30


class CFLViolation(NumericError):
    """The requested step exceeds the admissible explicit time step."""

    def __init__(self, dt: float, admissible: float):
        super().__init__(f"time step {dt:.6g} exceeds the CFL bound {admissible:.6g}")
        self.dt = dt
        self.admissible = admissible


@dataclass(frozen=True)
class SolverConfig:
    """Stepping configuration.

    ``boundary_values(X, t)`` feeds the Dirichlet mode; without it the boundary
    keeps its initial values. ``coefficient`` multiplies the right-hand side and
    may be a ScalarField (read at the latest time node not after t), a callable
    ``(X, t)`` or None.
    """

    spec: OperatorSpec
    cfl_safety: float = 0.4
    boundary: Boundary = "dirichlet_from_field"
    delta: float = 1e-8
    coefficient: ScalarField | Callable | None = None
    boundary_values: Callable | None = None

    def __post_init__(self):
        if not 0 < self.cfl_safety <= 1:
            raise DomainError(f"SolverConfig: cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if self.boundary not in ("dirichlet_from_field", "clamp_last_value"):
            raise DomainError(f"SolverConfig: unknown boundary mode {self.boundary!r}")
        if not self.delta > 0:
            raise DomainError(f"SolverConfig: gradient delta must be > 0, got {self.delta}")
        if self.spec.params.p < 2:
            raise DomainError("SolverConfig: time stepping needs p >= 2")

    @property
    def operator(self) -> OperatorSpec:
        return self.spec.with_delta(self.delta)


@dataclass(frozen=True)
class StepReport:
    step: int
    t: float
    dt: float
    max_abs_gradient: float
    residual_norm: float
    min_value: float
    max_value: float


def _interior(n):
    return (slice(1, -1),) * n


def _shift(u, axis, off):
    """View of u aligned with the interior, shifted by ``off`` along ``axis``."""
    idx = []
    for a in range(u.ndim):
        k = off if a == axis else 0
        idx.append(slice(1 + k, u.shape[a] - 1 + k))
    return u[tuple(idx)]


def _shift2(u, a, oa, b, ob):
    idx = []
    for ax in range(u.ndim):
        k = oa if ax == a else ob if ax == b else 0
        idx.append(slice(1 + k, u.shape[ax] - 1 + k))
    return u[tuple(idx)]


def discrete_derivatives(u: np.ndarray, dx: float, averaged: bool = False):
    """Gradient and Hessian at interior nodes.

    The gradient is central. With ``averaged`` each component is replaced by the
    root mean square of its two one-sided differences, keeping the central sign:
    this agrees with the central value to O(dx^2) where Du != 0 but does not vanish
    at a symmetric extremum, where the degenerate flux |Du|^{p-2} D^2 u has a
    nonzero limit for non-C^2 profiles.
    Returns arrays of shape ``interior + (n,)`` and ``interior + (n, n)``.
    """
    n = u.ndim
    inner = u[_interior(n)]
    grad = np.empty(inner.shape + (n,))
    hess = np.empty(inner.shape + (n, n))
    for i in range(n):
        up, dn = _shift(u, i, 1), _shift(u, i, -1)
        central = (up - dn) / (2 * dx)
        if averaged:
            mag = np.sqrt(0.5 * ((up - inner) ** 2 + (inner - dn) ** 2)) / dx
            grad[..., i] = np.where(central < 0, -mag, mag)
        else:
            grad[..., i] = central
        hess[..., i, i] = (up - 2 * inner + dn) / (dx * dx)
        for j in range(i + 1, n):
            cross = (_shift2(u, i, 1, j, 1) - _shift2(u, i, 1, j, -1)
                     - _shift2(u, i, -1, j, 1) + _shift2(u, i, -1, j, -1)) / (4 * dx * dx)
            hess[..., i, j] = cross
            hess[..., j, i] = cross
    return grad, hess


def _coefficient(cfg: SolverConfig, grid: Grid, t: float):
    c = cfg.coefficient
    if c is None:
        return 1.0
    if isinstance(c, ScalarField):
        j = int(np.clip(np.floor((t - c.grid.t_start) / c.grid.dt + 1e-9), 0, c.grid.nt - 1))
        vals = c.values[..., j]
        if vals.shape != grid.counts:
            raise DomainError("coefficient field does not match the solver grid")
    else:
        vals = np.broadcast_to(np.asarray(c(grid.spatial_mesh(), t), float), grid.counts)
    if np.any(vals < 0):
        raise DomainError("coefficient must be nonnegative")
    return vals[_interior(grid.n)]


def admissible_dt(u_slice: np.ndarray, grid: Grid, cfg: SolverConfig, t: float = 0.0) -> float:
    """``safety dx^2 / (2 n Lambda max|D_h u|_delta^{p-2} max coeff)`` over the slice."""
    grad, _ = discrete_derivatives(np.asarray(u_slice, float), grid.dx, averaged=True)
    return _admissible(grad, _coefficient(cfg, grid, t), grid, cfg)


def _admissible(grad, coeff, grid, cfg) -> float:
    p = cfg.spec.params.p
    gmax = float(np.max(regularized_norm(grad, cfg.delta))) ** (p - 2)
    cmax = float(np.max(coeff))
    denom = 2 * grid.n * cfg.spec.upper_ellipticity * gmax * cmax
    if denom == 0:
        return math.inf
    return cfg.cfl_safety * grid.dx ** 2 / denom


def _apply_boundary(u_next, u_prev, grid, cfg, t_next):
    n = grid.n
    if cfg.boundary == "dirichlet_from_field":
        if cfg.boundary_values is None:
            edge = np.ones(grid.counts, bool)
            edge[_interior(n)] = False
            u_next[edge] = u_prev[edge]
        else:
            bv = np.broadcast_to(np.asarray(cfg.boundary_values(grid.spatial_mesh(), t_next), float), grid.counts)
            edge = np.ones(grid.counts, bool)
            edge[_interior(n)] = False
            u_next[edge] = bv[edge]
    else:
        for ax in range(n):
            lo = [slice(None)] * n
            hi = [slice(None)] * n
            lo[ax], hi[ax] = 0, -1
            src_lo = list(lo)
            src_hi = list(hi)
            src_lo[ax], src_hi[ax] = 1, -2
            u_next[tuple(lo)] = u_next[tuple(src_lo)]
            u_next[tuple(hi)] = u_next[tuple(src_hi)]
    return u_next


def step(u_slice: np.ndarray, grid: Grid, cfg: SolverConfig, dt: float, t: float = 0.0, index: int = 0):
    """One forward Euler step; returns ``(u_next, StepReport)``.

    Raises CFLViolation (carrying the admissible step) instead of stepping when
    ``dt`` is too large for the incoming slice.
    """
    u = np.asarray(u_slice, float)
    if u.shape != grid.counts:
        raise DomainError(f"step: slice shape {u.shape} != grid spatial shape {grid.counts}")
    grad, hess = discrete_derivatives(u, grid.dx, averaged=True)
    coeff = _coefficient(cfg, grid, t)
    adm = _admissible(grad, coeff, grid, cfg)
    if dt > adm:
        raise CFLViolation(dt, adm)
    rate = coeff * degenerate_rhs(grad, hess, cfg.operator)
    u_next = u.copy()
    u_next[_interior(grid.n)] = u[_interior(grid.n)] + dt * rate
    u_next = _apply_boundary(u_next, u, grid, cfg, t + dt)
    if not np.all(np.isfinite(u_next)):
        raise NumericError(f"step {index}: non-finite values produced at t = {t + dt}")
    gnorm = np.sqrt(np.sum(grad ** 2, axis=-1))
    rep = StepReport(index, t + dt, dt, float(gnorm.max()), float(np.max(np.abs(rate))),
                     float(u_next.min()), float(u_next.max()))
    return u_next, rep


def evolve_report(initial, grid: Grid, cfg: SolverConfig):
    """Evolve ``initial`` (values at ``grid.t_start``) to every time node of ``grid``.

    Each output interval is split into 2^m equal substeps, m chosen from the CFL
    bound of the slice entering the interval. If a later substep violates the bound
    the interval is restarted from its first slice with m + 1.
    Returns ``(ScalarField, [StepReport, ...])``.
    """
    u = np.array(initial, dtype=float)
    if u.shape != grid.counts:
        raise DomainError(f"evolve: initial shape {u.shape} != grid spatial shape {grid.counts}")
    times = grid.times
    out = np.empty(grid.shape)
    out[..., 0] = u
    reports: list[StepReport] = []
    m = 0
    counter = 0
    for j in range(1, grid.nt):
        t0 = times[j - 1]
        adm = admissible_dt(u, grid, cfg, t0)
        m = 0
        while grid.dt / 2 ** m > adm:
            m += 1
        while True:
            if m > MAX_HALVINGS:
                raise NumericError(f"evolve: CFL restarts exhausted near t = {t0}")
            h = grid.dt / 2 ** m
            v = u
            local: list[StepReport] = []
            try:
                for k in range(2 ** m):
                    v, rep = step(v, grid, cfg, h, t0 + k * h, counter + k)
                    local.append(rep)
            except CFLViolation:
                m += 1
                continue
            break
        counter += len(local)
        reports.extend(local)
        u = v
        out[..., j] = u
    return ScalarField(grid, out), reports


def evolve(initial, grid: Grid, cfg: SolverConfig) -> ScalarField:
    return evolve_report(initial, grid, cfg)[0]


# --- inf-convolution ---------------------------------------------------------------


def _lower_envelope_1d(f: np.ndarray, c: float) -> np.ndarray:
    """``d[i] = min_j f[j] + c (i - j)^2`` by the parabola lower envelope, O(N)."""
    N = f.size
    fl = f.tolist()
    v = [0] * N
    z = [0.0] * (N + 1)
    k = 0
    z[0], z[1] = -math.inf, math.inf
    for q in range(1, N):
        fq = fl[q] + c * q * q
        while True:
            r = v[k]
            s = (fq - (fl[r] + c * r * r)) / (2 * c * (q - r))
            if s > z[k]:
                break
            k -= 1
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = math.inf
    d = np.empty(N)
    k = 0
    for i in range(N):
        while z[k + 1] < i:
            k += 1
        j = v[k]
        d[i] = fl[j] + c * (i - j) ** 2
    return d


def _envelope_along(a: np.ndarray, axis: int, c: float) -> np.ndarray:
    moved = np.moveaxis(a, axis, -1)
    flat = moved.reshape(-1, moved.shape[-1])
    res = np.empty_like(flat)
    for i in range(flat.shape[0]):
        res[i] = _lower_envelope_1d(flat[i], c)
    return np.moveaxis(res.reshape(moved.shape), -1, axis)


def inf_convolution(u: ScalarField, eps: float) -> ScalarField:
    """``u_eps(x, t) = min over nodes (y, s) of u(y, s) + (|x - y|^2 + (t - s)^2) / (2 eps)``.

    Exact on the grid; the quadratic penalty is separable, so one lower-envelope
    pass per axis suffices.
    """
    if not eps > 0:
        raise DomainError(f"inf_convolution: need eps > 0, got {eps}")
    g = u.grid
    a = np.array(u.values, dtype=float)
    for ax in range(g.n):
        a = _envelope_along(a, ax, g.dx ** 2 / (2 * eps))
    if g.nt > 1:
        a = _envelope_along(a, g.n, g.dt ** 2 / (2 * eps))
    return ScalarField(g, a)


# --- supersolution check -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ViolationReport:
    residual: np.ndarray = field(repr=False)
    violations: np.ndarray = field(repr=False)
    count: int
    worst: float
    worst_index: tuple | None

    @property
    def ok(self) -> bool:
        return self.count == 0


def discrete_residual(u: ScalarField, spec: OperatorSpec) -> np.ndarray:
    """``backward dt u - |D_h u|^{p-2} K(D_h^2 u)`` at interior nodes of slices 1..nt-1."""
    g = u.grid
    if g.nt < 3:
        raise DomainError("check_supersolution: need at least 3 time slices")
    res = np.empty(tuple(c - 2 for c in g.counts) + (g.nt - 1,))
    inner = _interior(g.n)
    for j in range(1, g.nt):
        cur = u.values[..., j]
        grad, hess = discrete_derivatives(cur, g.dx, averaged=True)
        ut = (cur[inner] - u.values[..., j - 1][inner]) / g.dt
        res[..., j - 1] = ut - degenerate_rhs(grad, hess, spec)
    return res


def check_supersolution(u: ScalarField, spec: OperatorSpec, tol: float) -> ViolationReport:
    """Nodes where the discrete supersolution residual drops below ``-tol``.

    Indices in the report refer to the full grid (interior offset added).
    """
    res = discrete_residual(u, spec)
    bad = res < -tol
    idx = np.argwhere(bad) + 1
    worst = float(res.min())
    wi = tuple(int(v) for v in np.unravel_index(int(np.argmin(res)), res.shape))
    wi = tuple(v + 1 for v in wi)
    return ViolationReport(res, idx, int(bad.sum()), worst, wi)


# --- refinement study ----------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceRow:
    dx: float
    linf: float
    l1: float
    order_linf: float
    order_l1: float
    steps: int


def convergence_study(exact: Callable, make_grid: Callable, cfg: SolverConfig, levels: int = 3,
                      error_mask: Callable | None = None):
    """Run the solver on ``levels`` dyadic refinements against ``exact(X, T)``.

    ``make_grid(level)`` returns the grid for a level (dx halving each time), and
    ``error_mask(X, t)`` optionally restricts where the final-time error is measured.
    Boundary values come from the exact solution. Returns ConvergenceRow list plus
    a flag that is True when the errors are strictly decreasing.
    """
    rows = []
    prev = None
    for lev in range(levels):
        g = make_grid(lev)
        X = g.spatial_mesh()
        c = SolverConfig(cfg.spec, cfg.cfl_safety, "dirichlet_from_field", cfg.delta, cfg.coefficient,
                         boundary_values=exact)
        field_, reps = evolve_report(exact(X, g.t_start), g, c)
        t1 = g.times[-1]
        err = np.abs(field_.values[..., -1] - exact(X, t1))
        if error_mask is not None:
            err = np.where(np.asarray(error_mask(X, t1), bool), err, 0.0)
        linf = float(err.max())
        l1 = float(err.sum() * g.dx ** g.n)
        if prev is None:
            o_inf = o_1 = math.nan
        else:
            o_inf = math.log2(prev[0] / linf) if linf > 0 and prev[0] > 0 else math.nan
            o_1 = math.log2(prev[1] / l1) if l1 > 0 and prev[1] > 0 else math.nan
        rows.append(ConvergenceRow(g.dx, linf, l1, o_inf, o_1, len(reps)))
        prev = (linf, l1)
    decreasing = all(b.linf < a.linf and b.l1 < a.l1 for a, b in zip(rows, rows[1:]))
    return rows, decreasing
