"""Grids, sampled fields, intrinsic cylinders and paraboloid sets.

Everything in here is a value type. Membership predicates snap comparisons by
a relative tolerance ``SNAP`` so that grid nodes lying exactly on a region's
boundary are classified the same way before and after an exact rescaling.
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Literal, Union

import numpy as np
from scipy.special import gamma as _gamma

SNAP = 1e-9

Orientation = Literal["past", "future", "full"]


class DomainError(ValueError):
    """Raised when an operation is asked to work outside its mathematical domain."""


class NumericError(ArithmeticError):
    """Raised when a numerical routine fails (non-convergence, non-finite output)."""


@dataclass(frozen=True)
class EllipticityParams:
    lam: float
    Lam: float
    p: float
    n: int = 1

    def __post_init__(self):
        if not (self.lam > 0 and self.Lam > 0):
            raise DomainError(f"EllipticityParams: need lambda > 0 and Lambda > 0, got {self.lam}, {self.Lam}")
        if self.lam > self.Lam:
            raise DomainError(f"EllipticityParams: need lambda <= Lambda, got {self.lam} > {self.Lam}")
        if not self.p > 1:
            raise DomainError(f"EllipticityParams: need p > 1, got {self.p}")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"EllipticityParams: need integer n >= 1, got {self.n}")

    def require_degenerate(self):
        if not self.p > 2:
            raise DomainError(f"this operation needs the degenerate range p > 2, got p = {self.p}")
        return self


def unit_ball_volume(n: int) -> float:
    """Lebesgue measure of the unit ball in R^n."""
    return math.pi ** (n / 2) / _gamma(n / 2 + 1)


@dataclass(frozen=True)
class Grid:
    """Uniform tensor-product space-time grid.

    Spatial nodes along axis i are ``origin[i] - extent[i] + k*dx`` for
    ``k = 0..N_i - 1``; time nodes are ``t_start + j*dt``.
    """

    spatial_origin: tuple
    spatial_extent: tuple
    dx: float
    t_start: float
    t_end: float
    dt: float
    counts: tuple = field(init=False, repr=False)
    nt: int = field(init=False, repr=False)

    def __post_init__(self):
        origin = tuple(float(v) for v in np.atleast_1d(self.spatial_origin))
        extent = tuple(float(v) for v in np.atleast_1d(self.spatial_extent))
        if len(extent) == 1 and len(origin) > 1:
            extent = extent * len(origin)
        if len(origin) != len(extent):
            raise DomainError("Grid: origin and extent dimensions differ")
        object.__setattr__(self, "spatial_origin", origin)
        object.__setattr__(self, "spatial_extent", extent)
        if not (self.dx > 0 and self.dt > 0):
            raise DomainError(f"Grid: need dx > 0 and dt > 0, got dx={self.dx}, dt={self.dt}")
        if not self.t_start < self.t_end:
            raise DomainError(f"Grid: need t_start < t_end, got {self.t_start}, {self.t_end}")
        counts = tuple(_node_count(2 * e, self.dx, "spatial extent") for e in extent)
        nt = _node_count(self.t_end - self.t_start, self.dt, "time interval")
        if min(counts) < 3 or nt < 1:
            raise DomainError("Grid: need at least 3 nodes per spatial axis")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "nt", nt)

    @classmethod
    def from_bounds(cls, lo, hi, dx, t_start, t_end, dt) -> "Grid":
        lo = np.atleast_1d(np.asarray(lo, float))
        hi = np.atleast_1d(np.asarray(hi, float))
        return cls(tuple((lo + hi) / 2), tuple((hi - lo) / 2), dx, t_start, t_end, dt)

    @property
    def n(self) -> int:
        return len(self.spatial_origin)

    @property
    def shape(self) -> tuple:
        return self.counts + (self.nt,)

    @property
    def lower(self) -> np.ndarray:
        return np.array(self.spatial_origin) - np.array(self.spatial_extent)

    @property
    def upper(self) -> np.ndarray:
        return self.lower + (np.array(self.counts) - 1) * self.dx

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.n * self.dt

    def axis(self, i: int) -> np.ndarray:
        return self.lower[i] + np.arange(self.counts[i]) * self.dx

    @property
    def times(self) -> np.ndarray:
        return self.t_start + np.arange(self.nt) * self.dt

    def spatial_mesh(self) -> np.ndarray:
        """Node coordinates, shape ``counts + (n,)``."""
        axes = [self.axis(i) for i in range(self.n)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def mesh(self):
        """Broadcastable ``(X, T)`` with X of shape ``counts + (1, n)`` and T of shape ``(1,)*n + (nt,)``."""
        X = self.spatial_mesh()[..., None, :]
        T = self.times.reshape((1,) * self.n + (self.nt,))
        return X, T

    def time_index(self, t: float) -> int:
        j = (t - self.t_start) / self.dt
        jr = round(j)
        if abs(j - jr) > 1e-6 or not 0 <= jr < self.nt:
            raise DomainError(f"time {t} is not a node of the grid time axis")
        return int(jr)

    def space_index(self, x) -> tuple:
        x = np.atleast_1d(np.asarray(x, float))
        k = (x - self.lower) / self.dx
        kr = np.round(k)
        if np.any(np.abs(k - kr) > 1e-6) or np.any(kr < 0) or np.any(kr >= np.array(self.counts)):
            raise DomainError(f"point {tuple(x)} is not a spatial node of the grid")
        return tuple(int(v) for v in kr)

    def contains_box(self, lo, hi, t_lo, t_hi) -> bool:
        """True when the closed box [lo, hi] x [t_lo, t_hi] lies inside the grid's bounding box."""
        tol = SNAP * max(1.0, self.dx)
        ttol = SNAP * max(1.0, abs(self.t_end), abs(self.t_start))
        return bool(
            np.all(np.asarray(lo) >= self.lower - tol)
            and np.all(np.asarray(hi) <= self.upper + tol)
            and t_lo >= self.t_start - ttol
            and t_hi <= self.times[-1] + ttol
        )


def _node_count(length, step, what):
    m = length / step
    mr = round(m)
    if abs(m - mr) > 1e-9 * max(1.0, m):
        raise DomainError(f"Grid: {what} {length} is not an integer multiple of step {step}")
    return int(mr) + 1


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise DomainError(f"ScalarField: values shape {vals.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise DomainError("ScalarField: values must be finite at every node")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def sample(cls, fn: Callable, grid: Grid) -> "ScalarField":
        """Sample ``fn(X, T)`` (X with trailing spatial axis) on every node."""
        X, T = grid.mesh()
        X = np.broadcast_to(X, grid.shape + (grid.n,))
        T = np.broadcast_to(T, grid.shape)
        return cls(grid, np.asarray(fn(X, T), float))

    def slice(self, j: int) -> np.ndarray:
        return self.values[..., j]

    def at(self, x, t) -> float:
        return float(self.values[self.grid.space_index(x) + (self.grid.time_index(t),)])


# --- regions -----------------------------------------------------------------


@dataclass(frozen=True)
class Cylinder:
    """Intrinsic cylinder ``(x0, t0) + Q_rho^{orientation}(theta)``.

    past:   B_rho(x0) x (t0 - theta rho^p, t0]
    future: B_rho(x0) x [t0, t0 + theta rho^p)
    full:   B_rho(x0) x (t0 - theta rho^p, t0 + theta rho^p)
    """

    x0: tuple
    t0: float
    rho: float
    theta: float = 1.0
    orientation: Orientation = "past"

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in np.atleast_1d(self.x0)))
        if not (self.rho > 0 and self.theta > 0):
            raise DomainError(f"Cylinder: need rho > 0 and theta > 0, got {self.rho}, {self.theta}")
        if self.orientation not in ("past", "future", "full"):
            raise DomainError(f"Cylinder: unknown orientation {self.orientation!r}")

    def height(self, p: float) -> float:
        return self.theta * self.rho ** p

    def time_bounds(self, p: float) -> tuple:
        h = self.height(p)
        lo = self.t0 - h if self.orientation in ("past", "full") else self.t0
        hi = self.t0 + h if self.orientation in ("future", "full") else self.t0
        return lo, hi

    def contains(self, X, T, p: float) -> np.ndarray:
        X = np.asarray(X, float)
        T = np.asarray(T, float)
        r2 = np.sum((X - np.array(self.x0)) ** 2, axis=-1)
        in_ball = r2 < self.rho ** 2 * (1 - 2 * SNAP)
        h = self.height(p)
        tol = SNAP * max(h, abs(self.t0), 1e-300)
        s = T - self.t0
        if self.orientation == "past":
            in_time = (s > -h + tol) & (s <= tol)
        elif self.orientation == "future":
            in_time = (s >= -tol) & (s < h - tol)
        else:
            in_time = (s > -h + tol) & (s < h - tol)
        return in_ball & in_time

    def mask(self, grid: Grid, p: float) -> np.ndarray:
        X, T = grid.mesh()
        return np.broadcast_to(self.contains(X, T, p), grid.shape)

    def measure(self, p: float) -> float:
        n = len(self.x0)
        lo, hi = self.time_bounds(p)
        return unit_ball_volume(n) * self.rho ** n * (hi - lo)


@dataclass(frozen=True)
class ParaboloidSet:
    """``{(x, t): theta |x - x0|^p <= t - t0 <= r}``."""

    x0: tuple
    t0: float
    theta: float
    r: float

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in np.atleast_1d(self.x0)))
        if not (self.theta > 0 and self.r > 0):
            raise DomainError("ParaboloidSet: need theta > 0 and r > 0")

    def contains(self, X, T, p: float) -> np.ndarray:
        X = np.asarray(X, float)
        s = np.asarray(T, float) - self.t0
        dist = np.sqrt(np.sum((X - np.array(self.x0)) ** 2, axis=-1))
        tol = SNAP * max(self.r, abs(self.t0))
        return (self.theta * dist ** p <= s + tol) & (s <= self.r + tol)

    def mask(self, grid: Grid, p: float) -> np.ndarray:
        X, T = grid.mesh()
        return np.broadcast_to(self.contains(X, T, p), grid.shape)

    def spatial_radius(self, p: float) -> float:
        return (self.r / self.theta) ** (1 / p)


Region = Union[Cylinder, ParaboloidSet, Callable]


def region_mask(region: Region, grid: Grid, params: EllipticityParams | None = None) -> np.ndarray:
    if isinstance(region, (Cylinder, ParaboloidSet)):
        if params is None:
            raise DomainError("region_mask: cylinder and paraboloid regions need the exponent p")
        return region.mask(grid, params.p)
    X, T = grid.mesh()
    return np.broadcast_to(np.asarray(region(X, T), bool), grid.shape)


def region_measure(region: Region, grid: Grid, params: EllipticityParams | None = None) -> float:
    """Node-count (midpoint rule) approximation of the Lebesgue measure of ``region``."""
    return float(np.count_nonzero(region_mask(region, grid, params))) * grid.cell_volume


def cylinder_contains(c: Cylinder, pt, params: EllipticityParams) -> bool:
    x, t = pt
    return bool(c.contains(np.atleast_1d(np.asarray(x, float)), t, params.p))


def theta_from_value(c: float, u0: float, params: EllipticityParams) -> float:
    if not u0 > 0:
        raise DomainError(f"intrinsic scaling undefined at nonpositive value u0 = {u0}")
    if not c > 0:
        raise DomainError(f"need c > 0, got {c}")
    return (c / u0) ** (params.p - 2)


def time_factor(r: float, M: float, p: float) -> float:
    """Time dilation tau in v(x, t) = u(r x, tau t) / M."""
    return r ** p * M ** (-(p - 2))


def rescaled_grid(g: Grid, r: float, M: float, p: float) -> Grid:
    tau = time_factor(r, M, p)
    return Grid(
        tuple(o / r for o in g.spatial_origin),
        tuple(e / r for e in g.spatial_extent),
        g.dx / r,
        g.t_start / tau,
        g.t_end / tau,
        g.dt / tau,
    )


def intrinsic_rescale(
    u: ScalarField,
    r: float,
    M: float,
    params: EllipticityParams,
    target: Grid | None = None,
    interpolate: bool = False,
) -> ScalarField:
    """Return ``v(x, t) = u(r x, r^p M^{-(p-2)} t) / M``.

    Without ``target`` the result lives on the rescaled copy of ``u.grid`` and is
    exact. With ``target``, every target node must map onto a node of ``u.grid``
    unless ``interpolate=True`` (multilinear).
    """
    if not (r > 0 and M > 0):
        raise DomainError(f"intrinsic_rescale: need r > 0 and M > 0, got {r}, {M}")
    if target is None:
        return ScalarField(rescaled_grid(u.grid, r, M, params.p), u.values / M)

    tau = time_factor(r, M, params.p)
    g = u.grid
    src_axes = []
    exact = True
    for i in range(target.n):
        k = (r * target.axis(i) - g.lower[i]) / g.dx
        kr = np.round(k)
        if np.any(np.abs(k - kr) > 1e-9) or kr.min() < 0 or kr.max() >= g.counts[i]:
            exact = False
        src_axes.append(kr.astype(int))
    k = (tau * target.times - g.t_start) / g.dt
    kr = np.round(k)
    if np.any(np.abs(k - kr) > 1e-9) or kr.min() < 0 or kr.max() >= g.nt:
        exact = False
    src_axes.append(kr.astype(int))

    if exact:
        return ScalarField(target, u.values[np.ix_(*src_axes)] / M)
    if not interpolate:
        raise DomainError(
            f"intrinsic_rescale: scale factors r={r}, M={M} do not map target nodes onto source nodes; "
            "pass interpolate=True for multilinear interpolation"
        )
    from scipy.interpolate import RegularGridInterpolator

    interp = RegularGridInterpolator(
        [g.axis(i) for i in range(g.n)] + [g.times], u.values, method="linear", bounds_error=True
    )
    X, T = target.mesh()
    X = np.broadcast_to(X, target.shape + (target.n,))
    T = np.broadcast_to(T, target.shape)
    pts = np.concatenate([r * X, tau * T[..., None]], axis=-1)
    return ScalarField(target, interp(pts.reshape(-1, target.n + 1)).reshape(target.shape) / M)


# --- serialization -------------------------------------------------------------

_MAGIC = b"HLFD"
_VERSION = 1


def write_field_binary(path, u: ScalarField) -> None:
    """Flat little-endian layout.

    magic(4) version(u32) n(u32) | origin(n f64) extent(n f64) dx dt t_start t_end (f64)
    | sizes(n+1 u64) | payload (row-major f64, time axis last)
    """
    g = u.grid
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, g.n))
        fh.write(struct.pack(f"<{g.n}d", *g.spatial_origin))
        fh.write(struct.pack(f"<{g.n}d", *g.spatial_extent))
        fh.write(struct.pack("<4d", g.dx, g.dt, g.t_start, g.t_end))
        fh.write(struct.pack(f"<{g.n + 1}Q", *g.shape))
        fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())


def read_field_binary(path) -> ScalarField:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise DomainError(f"{path}: not a field file")
    version, n = struct.unpack_from("<II", data, 4)
    if version != _VERSION:
        raise DomainError(f"{path}: unsupported field format version {version}")
    off = 12
    origin = struct.unpack_from(f"<{n}d", data, off)
    off += 8 * n
    extent = struct.unpack_from(f"<{n}d", data, off)
    off += 8 * n
    dx, dt, t0, t1 = struct.unpack_from("<4d", data, off)
    off += 32
    shape = struct.unpack_from(f"<{n + 1}Q", data, off)
    off += 8 * (n + 1)
    grid = Grid(origin, extent, dx, t0, t1, dt)
    if tuple(shape) != grid.shape:
        raise DomainError(f"{path}: header sizes {shape} inconsistent with geometry {grid.shape}")
    vals = np.frombuffer(data, dtype="<f8", offset=off, count=int(np.prod(shape))).reshape(shape)
    return ScalarField(grid, vals)


def write_field_csv(path, u: ScalarField) -> None:
    g = u.grid
    X, T = g.mesh()
    X = np.broadcast_to(X, g.shape + (g.n,)).reshape(-1, g.n)
    T = np.broadcast_to(T, g.shape).reshape(-1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(g.n)] + ["t", "value"])
        for xs, t, v in zip(X, T, u.values.reshape(-1)):
            w.writerow([repr(float(c)) for c in xs] + [repr(float(t)), repr(float(v))])
