"""Pucci extremal operators and the gradient-degenerate operators built on them."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core import DomainError, EllipticityParams, NumericError

JACOBI_TOL = 1e-13
JACOBI_MAX_SWEEPS = 100

Kind = Literal["pucci_minus", "pucci_plus", "model"]


class SymMatrix:
    """Symmetric n x n matrix stored as its upper triangle (row-major)."""

    __slots__ = ("n", "upper")

    def __init__(self, n: int, upper):
        upper = tuple(float(v) for v in upper)
        if len(upper) != n * (n + 1) // 2:
            raise DomainError(f"SymMatrix: expected {n * (n + 1) // 2} entries, got {len(upper)}")
        self.n = n
        self.upper = upper

    @classmethod
    def from_array(cls, M, atol: float = 1e-12) -> "SymMatrix":
        M = np.asarray(M, float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DomainError(f"SymMatrix: need a square matrix, got shape {M.shape}")
        scale = max(1.0, float(np.max(np.abs(M))))
        if np.max(np.abs(M - M.T)) > atol * scale:
            raise DomainError("SymMatrix: matrix is not symmetric")
        iu = np.triu_indices(M.shape[0])
        return cls(M.shape[0], M[iu])

    def to_array(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        iu = np.triu_indices(self.n)
        A[iu] = self.upper
        return A + np.triu(A, 1).T

    def __array__(self, dtype=None, copy=None):
        A = self.to_array()
        return A if dtype is None else A.astype(dtype)

    def eigenvalues(self) -> np.ndarray:
        return sym_eigvals(self.to_array())

    def __repr__(self):
        return f"SymMatrix({self.to_array().tolist()})"


def _as_sym(M) -> np.ndarray:
    if isinstance(M, SymMatrix):
        return M.to_array()
    M = np.asarray(M, float)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise DomainError(f"expected (..., n, n) matrices, got shape {M.shape}")
    # keep the upper triangle so the operand is exactly symmetric
    U = np.triu(M)
    return U + np.swapaxes(np.triu(M, 1), -1, -2)


def sym_eigvals(M) -> np.ndarray:
    """Ascending eigenvalues of (a batch of) symmetric matrices.

    Closed form for n <= 2, cyclic Jacobi for n >= 3.
    """
    A = _as_sym(M)
    n = A.shape[-1]
    if n == 1:
        return A[..., 0, :].copy()
    if n == 2:
        a, b, d = A[..., 0, 0], A[..., 0, 1], A[..., 1, 1]
        mean = 0.5 * (a + d)
        rad = np.hypot(0.5 * (a - d), b)
        return np.stack([mean - rad, mean + rad], axis=-1)
    return np.sort(_jacobi(A), axis=-1)


def _jacobi(A: np.ndarray) -> np.ndarray:
    A = np.array(A, dtype=float, copy=True)
    batch = A.shape[:-2]
    A = A.reshape((-1,) + A.shape[-2:])
    n = A.shape[-1]
    scale = np.sqrt(np.sum(A ** 2, axis=(-1, -2)))
    scale = np.where(scale > 0, scale, 1.0)
    iu = np.triu_indices(n, 1)
    for _ in range(JACOBI_MAX_SWEEPS):
        off = np.sqrt(2 * np.sum(A[:, iu[0], iu[1]] ** 2, axis=-1))
        if np.all(off <= JACOBI_TOL * scale):
            break
        for i in range(n - 1):
            for j in range(i + 1, n):
                apq = A[:, i, j]
                active = np.abs(apq) > 1e-300
                if not np.any(active):
                    continue
                safe = np.where(active, apq, 1.0)
                tau = (A[:, j, j] - A[:, i, i]) / (2 * safe)
                t = np.sign(tau) / (np.abs(tau) + np.hypot(1.0, tau))
                t = np.where(tau == 0, 1.0, t)
                c = np.where(active, 1 / np.sqrt(1 + t * t), 1.0)
                s = np.where(active, t * c, 0.0)
                ci, si = c[:, None], s[:, None]
                Ci, Cj = A[:, :, i].copy(), A[:, :, j].copy()
                A[:, :, i] = ci * Ci - si * Cj
                A[:, :, j] = si * Ci + ci * Cj
                Ri, Rj = A[:, i, :].copy(), A[:, j, :].copy()
                A[:, i, :] = ci * Ri - si * Rj
                A[:, j, :] = si * Ri + ci * Rj
                A[:, i, j] = np.where(active, 0.0, A[:, i, j])
                A[:, j, i] = A[:, i, j]
    else:
        off = np.sqrt(2 * np.sum(A[:, iu[0], iu[1]] ** 2, axis=-1))
        bad = np.flatnonzero(off > JACOBI_TOL * scale)
        if bad.size:
            raise NumericError(f"Jacobi eigen-solver did not converge in {JACOBI_MAX_SWEEPS} sweeps "
                               f"(first offending matrix index {bad[0]})")
    return np.diagonal(A, axis1=-2, axis2=-1).reshape(batch + (n,))


def pucci_minus(M, params: EllipticityParams):
    e = sym_eigvals(M)
    out = params.lam * np.sum(np.where(e > 0, e, 0.0), axis=-1) + params.Lam * np.sum(np.where(e < 0, e, 0.0), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def pucci_plus(M, params: EllipticityParams):
    e = sym_eigvals(M)
    out = params.Lam * np.sum(np.where(e > 0, e, 0.0), axis=-1) + params.lam * np.sum(np.where(e < 0, e, 0.0), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class OperatorSpec:
    kind: Kind
    params: EllipticityParams
    q: float | None = None
    delta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("pucci_minus", "pucci_plus", "model"):
            raise DomainError(f"OperatorSpec: unknown kind {self.kind!r}")
        if self.kind == "model" and not (self.q is not None and self.q > 1):
            raise DomainError(f"OperatorSpec: model kind requires q > 1, got {self.q}")
        if not self.delta >= 0:
            raise DomainError(f"OperatorSpec: need delta >= 0, got {self.delta}")

    @property
    def upper_ellipticity(self) -> float:
        """Largest coefficient the second-order part puts on an eigenvalue."""
        if self.kind == "model":
            return max(1.0, self.q - 1.0)
        return self.params.Lam

    def with_delta(self, delta: float) -> "OperatorSpec":
        return OperatorSpec(self.kind, self.params, self.q, delta)


def regularized_norm(xi, delta: float):
    xi = np.asarray(xi, float)
    return np.sqrt(np.sum(xi * xi, axis=-1) + delta * delta)


def degenerate_rhs(xi, M, spec: OperatorSpec):
    """``|xi|_delta^{p-2} K(xi, M)`` for K one of P-, P+ or the normalized q-Laplacian form."""
    xi = np.asarray(xi, float)
    A = _as_sym(M)
    p = spec.params.p
    nrm = regularized_norm(xi, spec.delta)
    zero = nrm == 0
    if p < 2 and np.any(zero):
        raise DomainError("degenerate_rhs: singular factor |xi|^(p-2) at xi = 0 with p < 2 and delta = 0")
    safe = np.where(zero, 1.0, nrm)
    factor = np.where(zero, 0.0 if p > 2 else 1.0, safe ** (p - 2))

    if spec.kind == "pucci_minus":
        K = pucci_minus(A, spec.params)
    elif spec.kind == "pucci_plus":
        K = pucci_plus(A, spec.params)
    else:
        xh = xi / safe[..., None]
        xh = np.where(zero[..., None], 0.0, xh)
        quad = np.einsum("...i,...ij,...j->...", xh, A, xh)
        K = np.trace(A, axis1=-2, axis2=-1) + (spec.q - 2) * quad
    out = factor * K
    out = np.where(zero & (p > 2), 0.0, out)
    return float(out) if np.ndim(out) == 0 else out


def _direction(xi) -> np.ndarray:
    xi = np.asarray(xi, float).reshape(-1)
    nrm = float(np.linalg.norm(xi))
    if nrm == 0:
        raise DomainError("direction undefined at xi = 0")
    return xi / nrm


def field_B(xi, params: EllipticityParams) -> SymMatrix:
    """``I + (p-2) xi_hat (x) xi_hat``; eigenvalues 1 (n-1 times) and p-1."""
    e = _direction(xi)
    return SymMatrix.from_array(np.eye(e.size) + (params.p - 2) * np.outer(e, e))


def sqrt_B_coefficient(p: float) -> float:
    # root of q^2 + 2q = p - 2 lying above -1
    return -1.0 + math.sqrt(p - 1.0)


def sqrt_B(xi, params: EllipticityParams) -> SymMatrix:
    e = _direction(xi)
    q = sqrt_B_coefficient(params.p)
    return SymMatrix.from_array(np.eye(e.size) + q * np.outer(e, e))
