"""Measurements of Harnack-type quantities on sampled fields.

Everything here is a reduction over grid nodes: intrinsic cylinders are
selected with the membership predicates from ``core`` and integrals are
midpoint node sums, so all quantities are exactly invariant under
node-preserving intrinsic rescalings.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import (Cylinder, DomainError, EllipticityParams, ScalarField, region_mask,
                   theta_from_value, unit_ball_volume)
from .solutions import BarrierSpec, ExampleSpec, barrier_residual_terms, example_eval


@dataclass(frozen=True)
class HarnackConfig:
    c_weak: float = 1.0
    c1_h: float = 1.0
    c2_h: float = 1.0
    eps_weak: float = 0.5
    m0: float = 0.5
    L0: float = 2.0
    L1: float = 4.0
    nu: float = 2.0
    rho0: float = 0.5
    k_max: int = 4

    def __post_init__(self):
        for name in ("c_weak", "c1_h", "c2_h", "eps_weak", "m0", "L0", "L1"):
            if not getattr(self, name) > 0:
                raise DomainError(f"HarnackConfig: {name} must be > 0")
        if not self.nu > 1:
            raise DomainError(f"HarnackConfig: need nu > 1, got {self.nu}")
        if not 0 < self.rho0 < 1:
            raise DomainError(f"HarnackConfig: need rho0 in (0, 1), got {self.rho0}")
        if self.c2_h < self.c1_h:
            raise DomainError("HarnackConfig: need c2_h >= c1_h")
        if self.k_max < 1:
            raise DomainError("HarnackConfig: k_max must be >= 1")


@dataclass
class MeasurementReport:
    """Measured numbers plus the grid they were measured on and refinement deltas."""

    kind: str
    values: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    refinement: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def grid_metadata(u: ScalarField) -> dict:
    g = u.grid
    return {"origin": list(g.spatial_origin), "extent": list(g.spatial_extent), "dx": g.dx,
            "t_start": g.t_start, "t_end": g.t_end, "dt": g.dt, "shape": list(g.shape)}


def _require_inside(u: ScalarField, cyl: Cylinder, p: float, what: str):
    lo, hi = cyl.time_bounds(p)
    x0 = np.array(cyl.x0)
    if not u.grid.contains_box(x0 - cyl.rho, x0 + cyl.rho, lo, hi):
        raise DomainError(
            f"{what}: needs the field to cover B_{cyl.rho:.6g}({tuple(x0)}) x [{lo:.6g}, {hi:.6g}]; "
            f"field covers {tuple(u.grid.lower)}..{tuple(u.grid.upper)} x [{u.grid.t_start}, {u.grid.times[-1]}]")


def _values_in(u: ScalarField, cyl: Cylinder, params: EllipticityParams, what: str) -> np.ndarray:
    _require_inside(u, cyl, params.p, what)
    vals = u.values[region_mask(cyl, u.grid, params)]
    if vals.size == 0:
        raise DomainError(f"{what}: no grid node inside the query cylinder; refine the grid")
    return vals


def _anchor(u: ScalarField, x0, t0) -> float:
    u0 = u.at(x0, t0)
    if not u0 > 0:
        raise DomainError(f"need u(x0, t0) > 0, got {u0}")
    return u0


@dataclass(frozen=True)
class WeakHarnack:
    lhs: float
    rhs: float
    ratio: float
    eps: float
    theta: float
    nodes: int

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.ratio))


def weak_harnack_ratio(u: ScalarField, x0, t0: float, rho: float, cfg: HarnackConfig,
                       params: EllipticityParams, eps: float | None = None) -> WeakHarnack:
    """L^eps average of u over the delayed cylinder divided by u(x0, t0).

    theta = (c_weak / u(x0, t0))^{p-2}; the average runs over
    (x0, t0 - theta rho^p) + Q_rho^-(theta) and u >= 0 is required on
    (x0, t0) + Q_{3 rho}^-(theta).
    """
    eps = cfg.eps_weak if eps is None else eps
    if not eps > 0:
        raise DomainError("weak_harnack_ratio: need eps > 0")
    x0 = np.atleast_1d(np.asarray(x0, float))
    u0 = _anchor(u, x0, t0)
    theta = theta_from_value(cfg.c_weak, u0, params)
    big = Cylinder(x0, t0, 3 * rho, theta, "past")
    if np.any(_values_in(u, big, params, "weak_harnack_ratio") < 0):
        raise DomainError("weak_harnack_ratio: u must be nonnegative on (x0, t0) + Q_{3 rho}^-(theta)")
    Q = Cylinder(x0, t0 - theta * rho ** params.p, rho, theta, "past")
    vals = _values_in(u, Q, params, "weak_harnack_ratio")
    # normalizing by u0 first keeps constants exact
    ratio = float(np.mean((vals / u0) ** eps) ** (1 / eps))
    return WeakHarnack(ratio * u0, u0, ratio, eps, theta, int(vals.size))


def weak_harnack_sweep(u, x0, t0, rho, cfg, params, eps_values=(0.1, 0.25, 0.5, 1.0)):
    """``[(eps, ratio), ...]`` over the given integrability exponents."""
    return [(e, weak_harnack_ratio(u, x0, t0, rho, cfg, params, e).ratio) for e in eps_values]


@dataclass(frozen=True)
class HarnackRatios:
    sup_ratio: float
    inf_ratio: float
    theta1: float
    theta2: float
    hypotheses_in_domain: bool

    def __iter__(self):
        return iter((self.sup_ratio, self.inf_ratio))


def hypothesis_cylinders(x0, t0, rho, theta1, theta2):
    """(x0, t0) + Q_{4 rho}^-(theta1) and (x0, t0 + 2 theta2 rho^p) + Q_{4 rho}^-(theta2).

    The second needs p for its anchor, so it is returned as a function of p.
    """
    first = Cylinder(x0, t0, 4 * rho, theta1, "past")
    return first, lambda p: Cylinder(x0, t0 + 2 * theta2 * rho ** p, 4 * rho, theta2, "past")


def harnack_ratios(u: ScalarField, x0, t0: float, rho: float, cfg: HarnackConfig,
                   params: EllipticityParams, strict: bool = False) -> HarnackRatios:
    """sup over the past cylinder / u(x0, t0) and u(x0, t0) / inf over the waiting-time cylinder.

    Past: (x0, t0 - theta1 rho^p) + Q_rho^-(theta1). Future:
    (x0, t0 + theta2 rho^p) + Q_rho^+(theta2). An infimum of zero gives
    ``inf_ratio = inf``. With ``strict`` the larger cylinders the two-sided
    estimate presupposes must also lie in the field domain.
    """
    p = params.p
    x0 = np.atleast_1d(np.asarray(x0, float))
    u0 = _anchor(u, x0, t0)
    th1 = theta_from_value(cfg.c1_h, u0, params)
    th2 = theta_from_value(cfg.c2_h, u0, params)
    past = Cylinder(x0, t0 - th1 * rho ** p, rho, th1, "past")
    future = Cylinder(x0, t0 + th2 * rho ** p, rho, th2, "future")
    vp = _values_in(u, past, params, "harnack_ratios (past cylinder)")
    vf = _values_in(u, future, params, "harnack_ratios (future cylinder)")
    if np.any(vp < 0) or np.any(vf < 0):
        raise DomainError("harnack_ratios: u must be nonnegative on the query cylinders")
    h1, h2 = hypothesis_cylinders(x0, t0, rho, th1, th2)
    inside = True
    for cyl in (h1, h2(p)):
        lo, hi = cyl.time_bounds(p)
        if not u.grid.contains_box(x0 - cyl.rho, x0 + cyl.rho, lo, hi):
            inside = False
            if strict:
                _require_inside(u, cyl, p, "harnack_ratios (hypothesis cylinder)")
    inf = float(vf.min())
    return HarnackRatios(float(vp.max()) / u0, math.inf if inf == 0 else u0 / inf, th1, th2, inside)


# --- propagation of smallness ----------------------------------------------------------


@dataclass(frozen=True)
class PropagationResult:
    found: bool
    xbar: tuple
    value: float
    threshold: float

    def __iter__(self):
        return iter((self.found, self.xbar, self.value))


def propagation_check(u: ScalarField, x0, t0: float, k: int, cfg: HarnackConfig,
                      params: EllipticityParams) -> PropagationResult:
    """Smallest value of u(., t0) over the nodes of B_{32^-k}(x0), against L0^k m0.

    Requires x0 in B_{4/3}, t0 in (-3, -1/2] for k = 1 and (-3, -1 + 32^{-kp}]
    for k >= 2, and u(0, 0) <= m0.
    """
    if k < 1:
        raise DomainError("propagation_check: k must be >= 1")
    x0 = np.atleast_1d(np.asarray(x0, float))
    t_hi = -0.5 if k == 1 else -1 + 32.0 ** (-k * params.p)
    if not (np.sum(x0 ** 2) < (4 / 3) ** 2 and -3 < t0 <= t_hi + 1e-12):
        raise DomainError(f"propagation_check: need x0 in B_4/3 and t0 in (-3, {t_hi:.6g}]")
    if u.at(np.zeros(params.n), 0.0) > cfg.m0:
        raise DomainError("propagation_check: need u(0, 0) <= m0")
    r = 32.0 ** -k
    g = u.grid
    j = g.time_index(t0)
    X = g.spatial_mesh()
    inside = np.sum((X - x0) ** 2, axis=-1) < r * r
    if not inside.any():
        raise DomainError(f"propagation_check: ball of radius {r:.3g} holds no grid node at dx = {g.dx}; refine the grid")
    vals = np.where(inside, u.values[..., j], np.inf)
    i = np.unravel_index(int(np.argmin(vals)), g.counts)
    best = float(vals[i])
    thr = cfg.L0 ** k * cfg.m0
    return PropagationResult(best <= thr, tuple(float(v) for v in X[i]), best, thr)


@dataclass(frozen=True)
class PropagationConstants:
    found: bool
    L0: float
    m0: float
    worst_member: int
    worst_point: tuple
    worst_value: float


def find_propagation_constants(family, cfg: HarnackConfig, params: EllipticityParams,
                               L0_grid=None, points=None) -> PropagationConstants:
    """Smallest L0 on a logarithmic grid passing ``propagation_check`` at k = 1 for every member.

    ``points`` are (x0, t0) pairs in B_4/3 x (-3, -1/2]; by default a coarse lattice
    of those common to all member grids. The smallest admissible L0 equals the
    worst ratio min_ball u / m0, so the scan records that witness as well.
    """
    if L0_grid is None:
        L0_grid = np.geomspace(1.0, 1e3, 121)
    L0_grid = np.sort(np.asarray(L0_grid, float))
    if points is None:
        points = default_propagation_points(family[0].grid, params)
    worst = (-math.inf, -1, None)
    for m, u in enumerate(family):
        for x0, t0 in points:
            val = propagation_check(u, x0, t0, 1, HarnackConfig(**{**asdict(cfg), "L0": 1.0}), params).value
            ratio = val / cfg.m0
            if ratio > worst[0]:
                worst = (ratio, m, (tuple(float(v) for v in np.atleast_1d(x0)), float(t0)), val)
    need = worst[0]
    ok = L0_grid[L0_grid >= need]
    if ok.size == 0:
        return PropagationConstants(False, math.nan, cfg.m0, worst[1], worst[2], worst[3])
    return PropagationConstants(True, float(ok[0]), cfg.m0, worst[1], worst[2], worst[3])


def default_propagation_points(g, params: EllipticityParams, nx: int = 5, nt: int = 6):
    n = params.n
    xs = np.linspace(-1.25, 1.25, nx)
    X = np.stack(np.meshgrid(*([xs] * n), indexing="ij"), -1).reshape(-1, n)
    X = X[np.sum(X ** 2, axis=1) < (4 / 3) ** 2]
    times = g.times[(g.times > -3) & (g.times <= -0.5 + 1e-12)]
    if times.size == 0:
        raise DomainError("no grid time in (-3, -1/2]")
    pick = times[np.unique(np.linspace(0, times.size - 1, nt).round().astype(int))]
    snapped = []
    for x in X:
        k = np.round((x - g.lower) / g.dx)
        snapped.append(g.lower + k * g.dx)
    return [(x, float(t)) for x in snapped for t in pick]


# --- level sets --------------------------------------------------------------------


def _window_mask(g, lo_t, hi_t):
    """Nodes of B_1 x (lo_t, hi_t]."""
    X, T = g.mesh()
    ball = np.sum(X ** 2, axis=-1) < 1
    tol = 1e-9 * max(1.0, abs(lo_t), abs(hi_t))
    return np.broadcast_to(ball & (T > lo_t + tol) & (T <= hi_t + tol), g.shape)


@dataclass(frozen=True)
class DecayTable:
    k: np.ndarray
    thresholds: np.ndarray
    measures: np.ndarray
    C: float
    eta: float
    residuals: np.ndarray
    degenerate: bool

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.measures) <= 0))


def level_set_decay(u: ScalarField, m0: float, L: float, k_max: int) -> DecayTable:
    """|{u > L^k m0} in B_1 x (-2, -1]| for k = 1..k_max and a fit measure ~ C eta^k.

    The fit is least squares on log measure over the positive entries; with fewer
    than two of them the fit is flagged degenerate and eta is 0.
    """
    g = u.grid
    n = g.n
    if not g.contains_box(-np.ones(n), np.ones(n), -2.0, -1.0):
        raise DomainError("level_set_decay: field must cover B_1 x [-2, -1]")
    mask = _window_mask(g, -2.0, -1.0)
    if np.any(u.values[mask] < 0):
        raise DomainError("level_set_decay: u must be nonnegative")
    ks = np.arange(1, k_max + 1)
    thr = L ** ks * m0
    vals = u.values[mask]
    meas = np.array([np.count_nonzero(vals > c) for c in thr], float) * g.cell_volume
    pos = meas > 0
    if pos.sum() < 2:
        C = float(meas[pos][0]) if pos.any() else 0.0
        return DecayTable(ks, thr, meas, C, 0.0, np.zeros(int(pos.sum())), True)
    A = np.stack([np.ones(pos.sum()), ks[pos]], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(meas[pos]), rcond=None)
    res = np.log(meas[pos]) - A @ coef
    return DecayTable(ks, thr, meas, float(np.exp(coef[0])), float(np.exp(coef[1])), res, False)


@dataclass(frozen=True)
class DensityCheck:
    measure: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.measure <= self.bound

    def __iter__(self):
        return iter((self.measure, self.bound))


def density_check(u: ScalarField, m0: float, L1: float, params: EllipticityParams) -> DensityCheck:
    """|{u >= L1 m0} in B_1 x (-2, -1]| against omega_n / 4^{n+1}."""
    g = u.grid
    n = params.n
    if not g.contains_box(-np.ones(n), np.ones(n), -2.0, 0.0):
        raise DomainError("density_check: field must cover B_1 x [-2, 0]")
    if u.at(np.zeros(n), 0.0) > m0:
        raise DomainError("density_check: need u(0, 0) <= m0")
    mask = _window_mask(g, -2.0, -1.0)
    if np.any(u.values[mask] < 0):
        raise DomainError("density_check: u must be nonnegative")
    meas = float(np.count_nonzero(u.values[mask] >= L1 * m0)) * g.cell_volume
    return DensityCheck(meas, unit_ball_volume(n) / 4 ** (n + 1))


# --- barrier parameters -------------------------------------------------------------------


def _s_samples(m: int) -> np.ndarray:
    """Profile variable samples on [0, 1], crowded toward the support edge, edge included."""
    return np.unique(np.concatenate([np.linspace(0.0, 1.0, m), 1 - np.geomspace(1e-12, 0.5, m // 4), [1.0]]))


def _radial_margin(spec: BarrierSpec, s: np.ndarray, margin: float):
    n = spec.params.n
    # the junction of the profile can be far narrower than the uniform spacing
    prof = spec.profile
    s = np.concatenate([s, np.linspace(prof.s_flat, prof.s_power, 513)])
    x = np.zeros((s.size, n))
    x[:, 0] = 1.5 * s
    dt, dif = barrier_residual_terms(spec, x, 1.0, closed=True)
    res = dt - dif
    scale = np.abs(dt) + np.abs(dif)
    return bool(np.all(res < -margin * scale)), res, scale, s


def barrier_sample(spec: BarrierSpec, rng: np.random.Generator, size: int, t_range=(0.25, 4.0)):
    """Random points of {|x| < (3/2) t^alpha, t in t_range}.

    A quarter of the points sit within 1e-12..0.5 of the edge and another quarter
    inside the junction of the profile; the rest are uniform in the ball.
    """
    n = spec.params.n
    t = np.exp(rng.uniform(np.log(t_range[0]), np.log(t_range[1]), size))
    d = rng.normal(size=(size, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    s = rng.uniform(0.0, 1.0, size) ** (1 / n)
    edge = size // 4
    s[:edge] = 1 - np.geomspace(1e-12, 0.5, edge)
    s[edge:2 * edge] = rng.uniform(spec.profile.s_flat, spec.profile.s_power, edge)
    s = np.minimum(s, np.nextafter(1.0, 0.0))
    x = d * (1.5 * t ** spec.alpha * s)[:, None]
    return x, t


@dataclass(frozen=True)
class BarrierScan:
    q: float
    alpha: float
    worst_residual: float
    worst_relative: float
    feasible: bool
    feasible_count: int
    table: np.ndarray = field(repr=False)
    q_grid: np.ndarray = field(repr=False)
    alpha_grid: np.ndarray = field(repr=False)
    witness: dict = field(default_factory=dict)
    sufficient_condition: bool = False
    edge_sign_condition: bool = False


def sufficient_condition(params: EllipticityParams, q: float) -> bool:
    """(4/9)(lambda (q+1) - Lambda (n-1)) >= lambda, the power-region eigenvalue bound."""
    return 4 / 9 * (params.lam * (q + 1) - params.Lam * (params.n - 1)) >= params.lam


def find_barrier_params(params: EllipticityParams, q_range=(2.0, 64.0), nq: int = 31,
                        alpha_range=(1e-14, None), nalpha: int = 79, margin: float = 0.1,
                        samples: int = 20000, s_samples: int = 4000, seed: int = 0) -> BarrierScan:
    """Smallest q, then largest alpha, for which psi is a strict subsolution on its support.

    The normalized residual depends on |x| / t^alpha only, so feasibility on the
    scan grid is decided on a dense radial sample that includes the support edge
    (as a limit from inside), with the residual required below ``-margin`` times
    |dt psi| + |diffusion|. The chosen pair is then checked on ``samples`` random
    space-time points with t in [1/4, 4].
    """
    params.require_degenerate()
    p = params.p
    a_hi = alpha_range[1] if alpha_range[1] is not None else 1 / (2 * p)
    qs = np.geomspace(q_range[0], q_range[1], nq)
    alphas = np.geomspace(a_hi, alpha_range[0], nalpha)
    s = _s_samples(s_samples)
    table = np.zeros((nq, nalpha), bool)
    worst = (-math.inf, None)
    for i, q in enumerate(qs):
        for j, a in enumerate(alphas):
            ok, res, scale, s_used = _radial_margin(BarrierSpec(float(q), float(a), params), s, margin)
            table[i, j] = ok
            if not ok:
                rel = res / np.where(scale > 0, scale, 1.0)
                k = int(np.argmax(rel))
                if rel[k] > worst[0]:
                    worst = (float(rel[k]), {"q": float(q), "alpha": float(a), "s": float(s_used[k]), "t": 1.0})
    rows = np.flatnonzero(table.any(axis=1))
    if rows.size == 0:
        return BarrierScan(math.nan, math.nan, math.nan, math.nan, False, 0, table, qs, alphas, worst[1] or {})
    i = int(rows[0])
    j = int(np.flatnonzero(table[i])[0])
    spec = BarrierSpec(float(qs[i]), float(alphas[j]), params)
    rng = np.random.default_rng(seed)
    x, t = barrier_sample(spec, rng, samples)
    dt, dif = barrier_residual_terms(spec, x, t)
    res = dt - dif
    rel = res / (np.abs(dt) + np.abs(dif))
    k = int(np.argmax(rel))
    witness = {"x": x[k].tolist(), "t": float(t[k])}
    q_star = float(qs[i])
    return BarrierScan(q_star, float(alphas[j]), float(res.max()), float(rel.max()), bool(np.all(res < 0)),
                       int(table.sum()), table, qs, alphas, witness, sufficient_condition(params, q_star),
                       params.lam * (q_star + 1) - params.Lam * (params.n - 1) > 0)


# --- waiting time ------------------------------------------------------------------------


def example_past_sup(spec: ExampleSpec, theta: float, rho: float = 1 / 8, nx: int = 33, nt: int = 65) -> float:
    """Sample sup of u_k over B_rho x (-2 theta rho^p, -theta rho^p]."""
    p = spec.params.p
    h = theta * rho ** p
    xs = np.concatenate([np.linspace(-rho, rho, nx + 2)[1:-1], [0.0]])
    lo = -2 * h
    ts = np.concatenate([lo + (np.arange(1, nt + 1) / nt) * h, [lo + 1e-12 * h]])
    X, T = np.meshgrid(xs, ts, indexing="ij")
    return float(np.max(example_eval(spec, X, T).value))


@dataclass(frozen=True)
class WaitingTimeRow:
    C0: float
    theta1: float
    bound: float
    bracket_ok: bool


def waiting_time_scan(p: float, C0_values, C: float = 2.0, k: int | None = None, rho: float = 1 / 8,
                      log_range=(1e-8, 1e4), tol: float = 1e-10) -> list[WaitingTimeRow]:
    """Critical past waiting time per C0 for the blow-up example.

    For each C0, bisection in log theta finds the largest theta1 with
    sup over (0, -theta1 rho^p) + Q_rho^-(theta1) of u_k <= C u_k(0, 0);
    every smaller theta1 also passes. ``k`` defaults to a value putting t_k well
    before the cylinders probed.
    """
    rows = []
    for C0 in C0_values:
        kk = k if k is not None else int(math.ceil(16 * C0 * C ** (p - 2))) + 1
        spec = ExampleSpec(float(C0), kk, EllipticityParams(1.0, 1.0, p, 1))
        u00 = float(example_eval(spec, 0.0, 0.0).value)

        def ok(th):
            return example_past_sup(spec, th, rho) <= C * u00

        lo, hi = log_range
        bracket = ok(lo) and not ok(hi)
        if bracket:
            a, b = math.log(lo), math.log(hi)
            while b - a > tol:
                mid = 0.5 * (a + b)
                if ok(math.exp(mid)):
                    a = mid
                else:
                    b = mid
            th = math.exp(a)
        else:
            th = math.nan
        rows.append(WaitingTimeRow(float(C0), th, (1 / rho) ** p / C0, bracket))
    return rows


def example_waiting_time_closed_form(p: float, C0: float, C: float, rho: float = 1 / 8) -> float:
    """theta* = rho^-p (1 - C^{2-p}) / (2 C0): where u_k(0, -2 theta rho^p) = C."""
    return rho ** -p * (1 - C ** (2 - p)) / (2 * C0)
