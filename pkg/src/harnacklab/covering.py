"""5r covering of finite families of forward intrinsic cylinders.

Every member is the closed cylinder ``B_rho(x) x [t, t + theta rho^p]``; its
5-dilate is the full cylinder ``B_{5 rho}(x) x [t - theta (5 rho)^p, t + theta (5 rho)^p]``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .core import DomainError, unit_ball_volume

EPS = 1e-12


@dataclass(frozen=True, eq=False)
class CylinderFamily:
    """``centers`` has shape (m, n + 1) with rows (x_1..x_n, t)."""

    centers: np.ndarray
    rhos: np.ndarray
    theta: float
    p: float

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, float))
        r = np.atleast_1d(np.asarray(self.rhos, float))
        if c.shape[0] != r.shape[0]:
            raise DomainError("CylinderFamily: centers and radii differ in length")
        if c.shape[1] < 2:
            raise DomainError("CylinderFamily: centers need at least one space and one time coordinate")
        if np.any(r <= 0) or np.any(r > 1):
            raise DomainError("CylinderFamily: every rho must lie in (0, 1]")
        if not 0 < self.theta < 1:
            raise DomainError(f"CylinderFamily: theta must lie in (0, 1), got {self.theta}")
        if not self.p > 1:
            raise DomainError(f"CylinderFamily: need p > 1, got {self.p}")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "rhos", r)

    def __len__(self):
        return len(self.rhos)

    @property
    def n(self) -> int:
        return self.centers.shape[1] - 1

    @property
    def x(self) -> np.ndarray:
        return self.centers[:, :-1]

    @property
    def t(self) -> np.ndarray:
        return self.centers[:, -1]

    @property
    def heights(self) -> np.ndarray:
        return self.theta * self.rhos ** self.p

    def subset(self, idx) -> "CylinderFamily":
        idx = np.asarray(idx, int)
        return CylinderFamily(self.centers[idx], self.rhos[idx], self.theta, self.p)


def random_family(rng: np.random.Generator, m: int, n: int = 1, p: float = 3.0, box: float = 1.0,
                  rho_min: float = 1e-3) -> CylinderFamily:
    """Radii log-uniform in [rho_min, 1], centers uniform in [0, box]^{n+1}, theta uniform in (0, 1)."""
    rhos = np.exp(rng.uniform(np.log(rho_min), 0.0, m))
    centers = rng.uniform(0.0, box, (m, n + 1))
    theta = float(rng.uniform(0.0, 1.0))
    while theta == 0.0:
        theta = float(rng.uniform(0.0, 1.0))
    return CylinderFamily(centers, rhos, theta, p)


def dyadic_class(rhos) -> np.ndarray:
    """k with 2^{-k-1} < rho <= 2^{-k}, exact at powers of two."""
    mant, expo = np.frexp(np.asarray(rhos, float))
    return np.where(mant == 0.5, -(expo - 1), -expo).astype(int)


def _intersections(fam: CylinderFamily, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Boolean matrix: closed cylinders a[i] and b[j] share a point."""
    x, t, r, h = fam.x, fam.t, fam.rhos, fam.heights
    d2 = np.sum((x[a][:, None, :] - x[b][None, :, :]) ** 2, axis=-1)
    reach = r[a][:, None] + r[b][None, :]
    space = d2 <= reach ** 2
    time = (t[a][:, None] <= t[b][None, :] + h[b][None, :]) & (t[b][None, :] <= t[a][:, None] + h[a][:, None])
    return space & time


def _contained_in_dilate(fam: CylinderFamily, members: np.ndarray, hosts: np.ndarray) -> np.ndarray:
    """Boolean matrix: member i lies inside the 5-dilate of host l."""
    x, t, r, h = fam.x, fam.t, fam.rhos, fam.heights
    H = fam.theta * (5 * r[hosts]) ** fam.p
    d = np.sqrt(np.sum((x[members][:, None, :] - x[hosts][None, :, :]) ** 2, axis=-1))
    scale = 1.0 + np.abs(t[hosts])[None, :]
    space = d + r[members][:, None] <= 5 * r[hosts][None, :] + EPS
    lo = t[hosts][None, :] - H[None, :] <= t[members][:, None] + EPS * scale
    hi = t[members][:, None] + h[members][:, None] <= t[hosts][None, :] + H[None, :] + EPS * scale
    return space & lo & hi


def vitali_subcover(family: CylinderFamily) -> list[int]:
    """Pairwise-disjoint subfamily whose 5-dilates cover every member.

    Dyadic radius classes are processed in increasing k; within a class the
    candidates are scanned by descending rho then input index and a cylinder is
    kept when it is disjoint from everything kept so far.
    """
    m = len(family)
    if m == 0:
        return []
    k = dyadic_class(family.rhos)
    order = np.lexsort((np.arange(m), -family.rhos, k))
    x, t = family.x[order], family.t[order]
    r, h = family.rhos[order], family.heights[order]
    blocked = np.zeros(m, bool)
    chosen = []
    for pos in range(m):
        if blocked[pos]:
            continue
        chosen.append(int(order[pos]))
        # block every later candidate whose closed cylinder meets this one
        rest = slice(pos + 1, m)
        d2 = np.sum((x[rest] - x[pos]) ** 2, axis=1)
        meet = (d2 <= (r[rest] + r[pos]) ** 2) & (t[rest] <= t[pos] + h[pos]) & (t[pos] <= t[rest] + h[rest])
        blocked[rest] |= meet
    return chosen


@dataclass(frozen=True, eq=False)
class CoverReport:
    disjoint: bool
    covered: bool
    overlapping_pairs: list = field(default_factory=list)
    uncovered: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.disjoint and self.covered


def verify_cover(family: CylinderFamily, selected, max_examples: int = 10) -> CoverReport:
    """Check pairwise disjointness of ``selected`` and 5-dilate coverage of the family."""
    sel = np.asarray(list(selected), int)
    m = len(family)
    if sel.size and (sel.min() < 0 or sel.max() >= m):
        raise DomainError("verify_cover: selected index out of range")
    if len(np.unique(sel)) != sel.size:
        raise DomainError("verify_cover: selected indices repeat")
    pairs = []
    if sel.size > 1:
        inter = _intersections(family, sel, sel)
        iu = np.argwhere(np.triu(inter, 1))
        pairs = [(int(sel[i]), int(sel[j])) for i, j in iu[:max_examples]]
        disjoint = iu.size == 0
    else:
        disjoint = True
    if m == 0:
        return CoverReport(disjoint, True, pairs, [])
    if sel.size == 0:
        return CoverReport(disjoint, False, pairs, list(range(min(m, max_examples))))
    inside = _contained_in_dilate(family, np.arange(m), sel)
    missing = np.flatnonzero(~inside.any(axis=1))
    return CoverReport(disjoint, missing.size == 0, pairs, [int(i) for i in missing[:max_examples]])


def unblocked_candidates(family: CylinderFamily, selected) -> list[int]:
    """Unselected members disjoint from every selected cylinder of class <= their own.

    Empty for a greedy-maximal selection.
    """
    sel = np.asarray(list(selected), int)
    m = len(family)
    rest = np.setdiff1d(np.arange(m), sel)
    if rest.size == 0:
        return []
    if sel.size == 0:
        return [int(i) for i in rest]
    k = dyadic_class(family.rhos)
    inter = _intersections(family, rest, sel) & (k[sel][None, :] <= k[rest][:, None])
    return [int(i) for i in rest[~inter.any(axis=1)]]


def cylinder_measure(rho, theta: float, n: int, p: float):
    """|Q_rho(theta)| = omega_n rho^n 2 theta rho^p for the full cylinder."""
    rho = np.asarray(rho, float)
    return unit_ball_volume(n) * rho ** n * 2 * theta * rho ** p


def dilate_measure_sums(family: CylinderFamily, selected):
    """``(sum |Q|, sum |5Q|)`` over the selected cylinders, each computed directly."""
    sel = np.asarray(list(selected), int)
    r = family.rhos[sel]
    base = float(np.sum(cylinder_measure(r, family.theta, family.n, family.p)))
    dil = float(np.sum(cylinder_measure(5 * r, family.theta, family.n, family.p)))
    return base, dil


def read_family_csv(path, theta: float, p: float) -> CylinderFamily:
    """Read rows ``x1..xn, t, rho`` (header required)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DomainError(f"{path}: empty family file")
    header, body = rows[0], rows[1:]
    if header[-1] != "rho" or header[-2] != "t":
        raise DomainError(f"{path}: header must end with 't,rho'")
    data = np.array([[float(v) for v in row] for row in body], float).reshape(-1, len(header))
    return CylinderFamily(data[:, :-1], data[:, -1], theta, p)


def write_family_csv(path, family: CylinderFamily) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(family.n)] + ["t", "rho"])
        for c, r in zip(family.centers, family.rhos):
            w.writerow([repr(float(v)) for v in c] + [repr(float(r))])
