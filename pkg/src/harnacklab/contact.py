"""Sliding test functions from below: contact points, the contact map and
measure estimates for sublevel sets of nonnegative supersolutions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Cylinder, DomainError, EllipticityParams, ParaboloidSet, ScalarField, region_mask
from .solutions import ContactFnSpec


@dataclass(frozen=True, eq=False)
class ParameterSet:
    """Sample parameters (y, s), each standing for a cell of (n+1)-volume ``cell_volume``."""

    samples: np.ndarray
    cell_volume: float

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.samples, float))
        if not self.cell_volume > 0:
            raise DomainError("ParameterSet: cell_volume must be > 0")
        if len(np.unique(s, axis=0)) != len(s):
            raise DomainError("ParameterSet: samples must be distinct")
        object.__setattr__(self, "samples", s)

    @property
    def n(self) -> int:
        return self.samples.shape[1] - 1

    def __len__(self):
        return len(self.samples)

    @property
    def measure(self) -> float:
        return len(self) * self.cell_volume

    @classmethod
    def ball_times_interval(cls, center, radius, s_lo, s_hi, dy, ds) -> "ParameterSet":
        """Lattice samples of closed ``B_radius(center) x [s_lo, s_hi]`` with steps dy, ds."""
        center = np.atleast_1d(np.asarray(center, float))
        m = int(math.floor(radius / dy + 1e-9))
        ax = np.arange(-m, m + 1) * dy
        Y = np.stack(np.meshgrid(*([ax] * center.size), indexing="ij"), -1).reshape(-1, center.size)
        Y = Y[np.sum(Y ** 2, axis=1) <= radius ** 2 * (1 + 1e-12)] + center
        k = int(math.floor((s_hi - s_lo) / ds + 1e-9))
        S = s_lo + np.arange(k + 1) * ds
        pts = np.array([np.append(y, s) for y in Y for s in S])
        return cls(pts, dy ** center.size * ds)


def contact_parameter_box(params: EllipticityParams, dy: float, ds: float) -> ParameterSet:
    """Parameters |y| <= 1/16, -4 16^-p <= s <= -2 16^-p used with slope a = 16^p."""
    p = params.p
    return ParameterSet.ball_times_interval(np.zeros(params.n), 1 / 16, -4 * 16.0 ** -p, -2 * 16.0 ** -p, dy, ds)


@dataclass(frozen=True, eq=False)
class ContactRecord:
    parameter: tuple
    contact: tuple | None
    index: tuple | None
    touched: bool
    gradient_at_contact: np.ndarray | None
    gap: float
    value: float
    tol: float
    on_boundary: bool = False
    started_below: bool = False


def _spatial_part(spec: ContactFnSpec, X):
    """The time-independent part of the contact function on the node mesh."""
    p = spec.params.p
    d = np.sqrt(np.sum((X - np.array(spec.y)) ** 2, axis=-1))
    return -spec.a ** (1 / (p - 1)) * ((p - 1) / p) * d ** (p / (p - 1))


def _central_gradient(vals: np.ndarray, idx: tuple, dx: float):
    g = np.empty(len(idx))
    for i, k in enumerate(idx):
        if k == 0 or k == vals.shape[i] - 1:
            return None
        up = list(idx)
        dn = list(idx)
        up[i] += 1
        dn[i] -= 1
        g[i] = (vals[tuple(up)] - vals[tuple(dn)]) / (2 * dx)
    return g


def _local_lipschitz(W: np.ndarray, idx: np.ndarray, dx: float) -> np.ndarray:
    """Per time slice j, the largest difference quotient of W[..., j] between node
    ``idx[j]`` and its 3^n - 1 neighbours."""
    shape = np.array(W.shape[:-1])
    n = shape.size
    cols = np.arange(W.shape[-1])
    centre = W[tuple(idx.T) + (cols,)]
    best = np.zeros(W.shape[-1])
    for off in np.ndindex(*(3,) * n):
        o = np.array(off) - 1
        if not o.any():
            continue
        nb = idx + o
        ok = np.all((nb >= 0) & (nb < shape), axis=1)
        nb = np.clip(nb, 0, shape - 1)
        q = np.abs(W[tuple(nb.T) + (cols,)] - centre) / (dx * float(np.linalg.norm(o)))
        best = np.maximum(best, np.where(ok, q, 0.0))
    return best


def find_contact(u: ScalarField, spec: ContactFnSpec, tol: float | None = None) -> ContactRecord:
    """First time slice at which the contact function reaches u from below.

    d(t_j) = min_x (u - phi)(x, t_j) is swept forward from the earliest slice; the
    contact is the first slice with d <= tol and its lexicographically first argmin.
    ``tol=None`` uses the resolution-aware band ``2 L dx + J``: L is the local
    Lipschitz estimate of u - phi around the argmin node and J the largest change
    of u - phi into the slice, which bounds how far the minimum can fall per step.
    """
    g = u.grid
    if g.n != spec.params.n:
        raise DomainError("find_contact: dimension mismatch between field and contact function")
    y = np.array(spec.y)
    if np.any(y < g.lower - 1e-12) or np.any(y > g.upper + 1e-12) or spec.s > g.times[-1]:
        raise DomainError(
            f"find_contact: vertex (y={tuple(y)}, s={spec.s}) outside the field domain "
            f"{tuple(g.lower)}..{tuple(g.upper)} x [{g.t_start}, {g.times[-1]}]")
    A = _spatial_part(spec, g.spatial_mesh())
    W = u.values - A[..., None]
    t = g.times
    flat = W.reshape(-1, g.nt)
    mins = flat.min(axis=0) - spec.a * (t - spec.s)
    arg = flat.argmin(axis=0)

    idx = np.stack(np.unravel_index(arg, g.counts), axis=-1)
    if tol is None:
        jump = np.zeros(g.nt)
        if g.nt > 1:
            jump[1:] = np.abs(np.diff(flat, axis=1) - spec.a * np.diff(t)).max(axis=0)
        # the constant shift a (t - s) does not change difference quotients within a slice
        tols = 2 * _local_lipschitz(W, idx, g.dx) * g.dx + jump
    else:
        tols = np.full(g.nt, float(tol))
    hits = np.flatnonzero(mins <= tols)
    if hits.size == 0:
        return ContactRecord(tuple(spec.y) + (spec.s,), None, None, False, None, float(mins[-1]), math.nan,
                             float(tols[-1]))
    j = int(hits[0])
    node = tuple(int(k) for k in idx[j])
    d = float(mins[j])
    x = tuple(float(g.axis(i)[k]) for i, k in enumerate(node))
    grad = _central_gradient(u.values[..., j], node, g.dx)
    return ContactRecord(
        tuple(spec.y) + (spec.s,), x + (float(t[j]),), node + (j,), True, grad, d,
        float(u.values[node + (j,)]), float(tols[j]), grad is None, j == 0 and d < -tols[j])


@dataclass(frozen=True)
class MapResidual:
    y_residual: float
    s_residual: float
    reliable: bool
    y_predicted: tuple
    s_predicted: float


def contact_map_check(rec: ContactRecord, u: ScalarField, a: float, params: EllipticityParams) -> MapResidual:
    """Compare the parameter with its prediction from data at the contact point.

    y = x + a^-1 |Du|^{p-2} Du and s = t - u/a - ((p-1)/p) a^-2 |Du|^p, with Du by
    central differences. Contacts on the grid boundary are flagged unreliable.
    """
    if not rec.touched:
        raise DomainError("contact_map_check: record did not touch")
    p = params.p
    n = params.n
    x = np.array(rec.contact[:n])
    t = rec.contact[n]
    y = np.array(rec.parameter[:n])
    s = rec.parameter[n]
    grad = _central_gradient(u.values[..., rec.index[n]], rec.index[:n], u.grid.dx)
    reliable = grad is not None
    if grad is None:
        grad = np.zeros(n)
    norm = float(np.linalg.norm(grad))
    push = norm ** (p - 2) * grad / a if norm > 0 else np.zeros(n)
    y_pred = x + push
    s_pred = t - rec.value / a - (p - 1) / p * a ** -2 * norm ** p
    return MapResidual(float(np.linalg.norm(y_pred - y)), abs(s_pred - s), reliable,
                       tuple(float(v) for v in y_pred), float(s_pred))


@dataclass(frozen=True, eq=False)
class ContactMeasure:
    gamma_measure: float
    e_measure: float
    ratio: float
    untouched: int
    dilation: int
    records: list = field(repr=False)

    def __iter__(self):
        return iter((self.gamma_measure, self.e_measure, self.ratio))


def contact_set_measure(u: ScalarField, E: ParameterSet, a: float, dilation: int = 1,
                        params: EllipticityParams | None = None, tol: float | None = None) -> ContactMeasure:
    """|Gamma(E)| estimated as the union of contact nodes dilated by ``dilation`` cells.

    The dilation is a box of half-width ``dilation`` nodes in every space-time
    direction. Parameters that never touch are left out and counted in
    ``untouched``.
    """
    if dilation < 0:
        raise DomainError("contact_set_measure: dilation must be >= 0")
    g = u.grid
    if params is None:
        raise DomainError("contact_set_measure: params required")
    n = params.n
    hit = np.zeros(g.shape, bool)
    records = []
    untouched = 0
    for row in E.samples:
        rec = find_contact(u, ContactFnSpec(tuple(row[:n]), float(row[n]), a, params), tol)
        records.append(rec)
        if not rec.touched:
            untouched += 1
            continue
        sl = tuple(slice(max(k - dilation, 0), k + dilation + 1) for k in rec.index)
        hit[sl] = True
    gamma = float(hit.sum()) * g.cell_volume
    e = E.measure
    return ContactMeasure(gamma, e, gamma / e, untouched, dilation, records)


def _require_node(u: ScalarField, x, t):
    try:
        return u.at(x, t)
    except DomainError as exc:
        raise DomainError(f"field must contain the node ({x}, {t}): {exc}") from None


def basic_measure_estimate(u: ScalarField, params: EllipticityParams) -> float:
    """|{u < 4} intersected with B_1 x (-1, 0]| for u >= 0 with u(0, 0) <= 1."""
    g = u.grid
    n = params.n
    if not g.contains_box(-np.ones(n), np.ones(n), -1.0, 0.0):
        raise DomainError("basic_measure_estimate: field must cover B_1 x [-1, 0]")
    Q = Cylinder(np.zeros(n), 0.0, 1.0, 1.0, "past")
    mask = region_mask(Q, g, params)
    if np.any(u.values[mask] < 0):
        raise DomainError("basic_measure_estimate: u must be nonnegative on the cylinder")
    if _require_node(u, np.zeros(n), 0.0) > 1:
        raise DomainError("basic_measure_estimate: need u(0, 0) <= 1")
    return float(np.count_nonzero(mask & (u.values < 4))) * g.cell_volume


def quantified_measure_estimate(u: ScalarField, x0, rho: float, m0: float, L0: float,
                                params: EllipticityParams, c1: float = 1e-3):
    """|{(x, t) in paraboloid of height rho^p with vertex (x0, -rho^p): x in B_1, u < 4 L0 m0}|.

    Returns ``(measure, c1 rho^{n+p})``.
    """
    n, p = params.n, params.p
    x0 = np.atleast_1d(np.asarray(x0, float))
    if not 0 < rho <= 1:
        raise DomainError(f"quantified_measure_estimate: need 0 < rho <= 1, got {rho}")
    g = u.grid
    if not g.contains_box(x0 - rho, x0 + rho, -rho ** p, 0.0):
        raise DomainError("quantified_measure_estimate: field must cover the paraboloid's bounding box")
    j0 = g.time_index(0.0)
    X = g.spatial_mesh()
    near = (np.sum((X - x0) ** 2, axis=-1) < rho ** 2) & (np.sum(X ** 2, axis=-1) < 1)
    if not near.any():
        raise DomainError("quantified_measure_estimate: B_rho(x0) and B_1 share no grid node")
    if float(u.values[..., j0][near].min()) > m0:
        raise DomainError("quantified_measure_estimate: need inf over B_rho(x0) and B_1 of u(., 0) <= m0")
    if np.any(u.values < 0):
        raise DomainError("quantified_measure_estimate: u must be nonnegative")
    P = ParaboloidSet(x0, -rho ** p, 1.0, rho ** p)
    mask = P.mask(g, p) & (np.sum(X ** 2, axis=-1) < 1)[..., None] & (u.values < 4 * L0 * m0)
    return float(np.count_nonzero(mask)) * g.cell_volume, c1 * rho ** (n + p)
