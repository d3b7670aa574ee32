"""Closed-form catalog: Barenblatt profile, radial barrier, the blow-up example and
the sliding test functions, each with exact space/time derivatives."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DomainError, EllipticityParams
from .operators import OperatorSpec, degenerate_rhs, pucci_minus


@dataclass(frozen=True, eq=False)
class EvalResult:
    """Pointwise evaluation. ``smooth`` is False where a derivative is one-sided or singular."""

    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    dt: np.ndarray
    smooth: np.ndarray

    def __iter__(self):
        return iter((self.value, self.grad, self.hess, self.dt))


def _points(x, n):
    x = np.asarray(x, float)
    if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != n:
        raise DomainError(f"expected points with trailing dimension {n}, got shape {x.shape}")
    return x


def _radial(x):
    r = np.sqrt(np.sum(x * x, axis=-1))
    safe = np.where(r > 0, r, 1.0)
    e = np.where((r > 0)[..., None], x / safe[..., None], 0.0)
    return r, e


def _radial_hessian(e, f_rr, f_r_over_r):
    n = e.shape[-1]
    ee = e[..., :, None] * e[..., None, :]
    eye = np.eye(n)
    return f_rr[..., None, None] * ee + f_r_over_r[..., None, None] * (eye - ee)


# --- Barenblatt ------------------------------------------------------------------


@dataclass(frozen=True)
class BarenblattSpec:
    """Fundamental solution ``t^{-n a}(1 - c (|x|/t^a)^{p/(p-1)})_+^{(p-1)/(p-2)}``.

    The same formula with ``p`` in ``(2n/(n+1), 2)`` gives the fast-diffusion
    profile (``c < 0``, negative exponent), which the contact experiments use.
    """

    params: EllipticityParams
    alpha: float = field(init=False)
    c: float = field(init=False)

    def __post_init__(self):
        p, n = self.params.p, self.params.n
        if p == 2 or not p > 2 * n / (n + 1):
            raise DomainError(f"BarenblattSpec: need p > 2 or 2n/(n+1) < p < 2, got p = {p}")
        alpha = 1.0 / (n * (p - 2) + p)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "c", (p - 2) / p * alpha ** (1 / (p - 1)))

    def support_radius(self, t) -> float:
        if self.c <= 0:
            return np.inf
        p = self.params.p
        return (1 / self.c) ** ((p - 1) / p) * np.asarray(t, float) ** self.alpha


def barenblatt_eval(spec: BarenblattSpec, x, t) -> EvalResult:
    p, n = spec.params.p, spec.params.n
    t = np.asarray(t, float)
    if np.any(t <= 0):
        raise DomainError("barenblatt_eval: need t > 0")
    x = _points(x, n)
    a, c = spec.alpha, spec.c
    g = p / (p - 1)
    m = (p - 1) / (p - 2)
    r, e = _radial(x)
    r, t = np.broadcast_arrays(r, t)
    ta = t ** (-a)
    z = r * ta
    w = 1 - c * z ** g
    inside = w > 0
    ws = np.where(inside, w, 1.0)
    amp = t ** (-n * a)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = amp * ws ** m
        f_r = amp * m * ws ** (m - 1) * (-c * g * z ** (g - 1)) * ta
        f_r_over_r = amp * m * ws ** (m - 1) * (-c * g) * z ** (g - 2) * ta * ta
        f_rr = amp * (m * (m - 1) * ws ** (m - 2) * (c * g * z ** (g - 1) * ta) ** 2
                      - m * ws ** (m - 1) * c * g * (g - 1) * z ** (g - 2) * ta * ta)
        f_t = amp / t * (-n * a * ws ** m + m * ws ** (m - 1) * c * a * g * z ** g)
    singular_center = (r == 0) & (p > 2)
    smooth = (np.abs(w) > 1e-12) & ~singular_center
    val = np.where(inside, val, 0.0)
    f_r = np.where(inside, f_r, 0.0)
    f_t = np.where(inside, f_t, 0.0)
    f_rr = np.where(inside, f_rr, 0.0)
    f_r_over_r = np.where(inside, f_r_over_r, 0.0)
    f_rr = np.where(singular_center, np.nan, f_rr)
    f_r_over_r = np.where(singular_center, np.nan, f_r_over_r)
    grad = f_r[..., None] * e
    hess = _radial_hessian(e, f_rr, f_r_over_r)
    return EvalResult(val, grad, hess, f_t, smooth)


def barenblatt_residual(spec: BarenblattSpec, x, t, q: float | None = None):
    """``dt phi - |D phi|^{p-2} Delta_q^N phi`` from the closed-form derivatives (q defaults to p)."""
    ev = barenblatt_eval(spec, x, t)
    op = OperatorSpec("model", spec.params, q=spec.params.p if q is None else q)
    return ev.dt - degenerate_rhs(ev.grad, ev.hess, op)


# --- barrier profile -------------------------------------------------------------

EDGE_SLACK = 1e-9


def _saturate(v):
    """C^2 increasing map: identity on v <= 1/2, constant 1 on v >= 3/2."""
    v = np.asarray(v, float)
    tau = np.clip(v - 0.5, 0.0, 1.0)
    phi = np.where(v <= 0.5, v, np.where(v >= 1.5, 1.0, 0.5 + tau - tau ** 3 + 0.5 * tau ** 4))
    d1 = np.where(v <= 0.5, 1.0, np.where(v >= 1.5, 0.0, 1 - 3 * tau ** 2 + 2 * tau ** 3))
    d2 = np.where((v <= 0.5) | (v >= 1.5), 0.0, -6 * tau + 6 * tau ** 2)
    return phi, d1, d2


@dataclass(frozen=True)
class GProfile:
    """Decreasing profile with g = 2^q on [0, 1/4] and g = s^-q - 1 on [1/2, 1], zero beyond 1.

    On the junction, ``g = 2^q - 1 + S(s^-q - 2^q)`` with S a C^2 saturating map,
    which is monotone by construction.
    """

    q: float
    s_flat: float = field(init=False)
    s_power: float = field(init=False)

    def __post_init__(self):
        if not self.q > 1:
            raise DomainError(f"GProfile: need q > 1, got {self.q}")
        top = 2.0 ** self.q
        object.__setattr__(self, "s_flat", (top + 1.5) ** (-1 / self.q))
        object.__setattr__(self, "s_power", (top + 0.5) ** (-1 / self.q))

    def __call__(self, s, closed: bool = False):
        """Return ``(g, g', g'')`` at ``s >= 0``.

        With ``closed`` the support edge s = 1 (and rounding noise above it)
        gets the one-sided limits of the power branch.
        """
        s = np.asarray(s, float)
        q = self.q
        top = 2.0 ** q
        flat = s <= self.s_flat
        ss = np.where(flat, 1.0, s)
        u = ss ** (-q) - top
        u1 = -q * ss ** (-q - 1)
        u2 = q * (q + 1) * ss ** (-q - 2)
        phi, d1, d2 = _saturate(u)
        # on the pure power branch evaluate directly, avoiding cancellation against 2^q
        g = np.where(u <= 0.5, ss ** (-q) - 1, top - 1 + phi)
        g1 = d1 * u1
        g2 = d2 * u1 * u1 + d1 * u2
        outside = s > 1 + EDGE_SLACK if closed else s >= 1
        g = np.where(flat, top, np.where(outside | (s >= 1), 0.0, g))
        g1 = np.where(flat | outside, 0.0, g1)
        g2 = np.where(flat | outside, 0.0, g2)
        return g, g1, g2


@dataclass(frozen=True)
class BarrierSpec:
    q: float
    alpha: float
    params: EllipticityParams
    beta: float = field(init=False)
    amplitude: float = field(init=False)
    profile: GProfile = field(init=False)

    def __post_init__(self):
        self.params.require_degenerate()
        if not 0 < self.alpha < 1:
            raise DomainError(f"BarrierSpec: need alpha in (0, 1), got {self.alpha}")
        p = self.params.p
        object.__setattr__(self, "beta", (1 - self.alpha * p) / (p - 2))
        object.__setattr__(self, "amplitude", self.alpha ** (1 / (p - 2)))
        object.__setattr__(self, "profile", GProfile(self.q))

    def support_radius(self, t):
        return 1.5 * np.asarray(t, float) ** self.alpha


def barrier_eval(spec: BarrierSpec, x, t, closed: bool = False) -> EvalResult:
    n = spec.params.n
    t = np.asarray(t, float)
    if np.any(t <= 0):
        raise DomainError("barrier_eval: need t > 0")
    x = _points(x, n)
    r, e = _radial(x)
    r, t = np.broadcast_arrays(r, t)
    ta = t ** spec.alpha
    s = 2 * r / (3 * ta)
    g, g1, g2 = spec.profile(s, closed=closed)
    amp = spec.amplitude * t ** (-spec.beta)
    val = amp * g
    f_r = amp * g1 * 2 / (3 * ta)
    safe_s = np.where(s > 0, s, 1.0)
    k2 = amp * 4 / (9 * ta * ta)
    f_rr = k2 * g2
    f_r_over_r = k2 * np.where(s > 0, g1 / safe_s, 0.0)
    f_t = amp / t * (-spec.beta * g - spec.alpha * s * g1)
    grad = f_r[..., None] * e
    hess = _radial_hessian(e, f_rr, f_r_over_r)
    smooth = s != 1
    return EvalResult(val, grad, hess, f_t, smooth)


def barrier_residual_terms(spec: BarrierSpec, x, t, closed: bool = False):
    """Return ``(dt psi, |D psi|^{p-2} P^-(D^2 psi))`` inside the support.

    ``closed`` admits the edge |x| = (3/2) t^alpha, evaluated as the limit from inside.
    """
    ev = barrier_eval(spec, x, t, closed=closed)
    t = np.asarray(t, float)
    r = np.sqrt(np.sum(_points(x, spec.params.n) ** 2, axis=-1))
    R = spec.support_radius(t)
    outside = r > R * (1 + EDGE_SLACK) if closed else r >= R
    if np.any(outside):
        raise DomainError("barrier residual: point outside the support |x| < (3/2) t^alpha")
    gnorm = np.sqrt(np.sum(ev.grad ** 2, axis=-1))
    diffusion = gnorm ** (spec.params.p - 2) * pucci_minus(ev.hess, spec.params)
    return ev.dt, diffusion


def barrier_subsolution_residual(spec: BarrierSpec, x, t):
    dt, diffusion = barrier_residual_terms(spec, x, t)
    return dt - diffusion


# --- blow-up example ------------------------------------------------------------------


@dataclass(frozen=True)
class ExampleSpec:
    """One-dimensional example with coefficient a(x, t) whose solutions blow up at t = -1/C0."""

    C0: float
    k: int
    params: EllipticityParams
    t_k: float = field(init=False)

    def __post_init__(self):
        self.params.require_degenerate()
        if self.params.n != 1:
            raise DomainError("ExampleSpec: the example is one-dimensional (n = 1)")
        if not self.C0 > 1:
            raise DomainError(f"ExampleSpec: need C0 > 1, got {self.C0}")
        t_k = -1.0 / self.C0 + 1.0 / self.k
        if not t_k < 0:
            raise DomainError(f"ExampleSpec: need k > C0 so that t_k < 0 (k={self.k}, C0={self.C0})")
        object.__setattr__(self, "t_k", t_k)

    def amplitude(self, t):
        """alpha(t) = (1 + C0 t)^(-1/(p-2)) for t > -1/C0."""
        t = np.asarray(t, float)
        if np.any(1 + self.C0 * t <= 0):
            raise DomainError("amplitude undefined for t <= -1/C0")
        return (1 + self.C0 * t) ** (-1 / (self.params.p - 2))

    def amplitude_rate(self, t):
        p = self.params.p
        return -self.C0 / (p - 2) * self.amplitude(t) ** (p - 1)

    @property
    def coefficient_constant(self) -> float:
        p = self.params.p
        return (p - 1) ** p / ((p - 2) * p ** (p - 1)) * self.C0


def example_eval(spec: ExampleSpec, x, t) -> EvalResult:
    p = spec.params.p
    x = np.asarray(x, float)
    if x.ndim and x.shape[-1] == 1:
        x = x[..., 0]
    if np.any(np.abs(x) >= 1):
        raise DomainError("example_eval: need |x| < 1")
    x, t = np.broadcast_arrays(x, np.asarray(t, float))
    g = p / (p - 1)
    ax = np.abs(x)
    shape = 1 - ax ** g
    late = t > spec.t_k
    t_safe = np.where(late, t, spec.t_k)
    amp_late = spec.amplitude(t_safe)
    amp_k = spec.amplitude(spec.t_k)
    rate_k = spec.amplitude_rate(spec.t_k)
    amp = np.where(late, amp_late, amp_k)
    val = np.where(late, amp_late * shape, rate_k * (t - spec.t_k) + amp_k * shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = -amp * g * ax ** (g - 1) * np.sign(x)
        d2 = -amp * g * (g - 1) * ax ** (g - 2)
    ut = np.where(late, spec.amplitude_rate(t_safe) * shape, rate_k)
    smooth = (x != 0) & (t != spec.t_k)
    d2 = np.where(x == 0, -np.inf, d2)
    return EvalResult(val, d1[..., None], d2[..., None, None], ut, smooth)


def example_coefficient(spec: ExampleSpec, x, t):
    p = spec.params.p
    x = np.asarray(x, float)
    if np.any(np.abs(x) >= 1):
        raise DomainError("example_coefficient: need |x| < 1")
    x, t = np.broadcast_arrays(x, np.asarray(t, float))
    shape = 1 - np.abs(x) ** (p / (p - 1))
    return spec.coefficient_constant * np.where(t > spec.t_k, shape, 1.0)


def example_residual(spec: ExampleSpec, x, t):
    """``dt u - a |u'|^{p-2} u''``; vanishes identically off x = 0 and t = t_k."""
    x = np.asarray(x, float)
    t = np.asarray(t, float)
    if np.any(x == 0) or np.any(t == spec.t_k):
        raise DomainError("example_residual: excluded point (x = 0 or t = t_k)")
    ev = example_eval(spec, x, t)
    d1, d2 = ev.grad[..., 0], ev.hess[..., 0, 0]
    return ev.dt - example_coefficient(spec, x, t) * np.abs(d1) ** (spec.params.p - 2) * d2


# --- sliding test functions ---------------------------------------------------------------


@dataclass(frozen=True)
class ContactFnSpec:
    y: tuple
    s: float
    a: float
    params: EllipticityParams

    def __post_init__(self):
        object.__setattr__(self, "y", tuple(float(v) for v in np.atleast_1d(self.y)))
        if len(self.y) != self.params.n:
            raise DomainError("ContactFnSpec: vertex dimension does not match params.n")
        if not self.a > 0:
            raise DomainError(f"ContactFnSpec: need slope a > 0, got {self.a}")


def contact_fn_value(spec: ContactFnSpec, x, t):
    p = spec.params.p
    x = _points(x, spec.params.n)
    d = np.sqrt(np.sum((x - np.array(spec.y)) ** 2, axis=-1))
    return -spec.a ** (1 / (p - 1)) * ((p - 1) / p) * d ** (p / (p - 1)) + spec.a * (np.asarray(t, float) - spec.s)


def contact_fn_eval(spec: ContactFnSpec, x, t) -> EvalResult:
    p = spec.params.p
    n = spec.params.n
    x = _points(x, n)
    diff = x - np.array(spec.y)
    d, e = _radial(diff)
    d, t = np.broadcast_arrays(d, np.asarray(t, float))
    ka = spec.a ** (1 / (p - 1))
    val = -ka * ((p - 1) / p) * d ** (p / (p - 1)) + spec.a * (t - spec.s)
    f_r = -ka * d ** (1 / (p - 1))
    grad = f_r[..., None] * e
    with np.errstate(divide="ignore", invalid="ignore"):
        f_rr = -ka / (p - 1) * d ** ((2 - p) / (p - 1))
        f_r_over_r = -ka * d ** ((2 - p) / (p - 1))
    centre = d == 0
    smooth = ~centre if p > 2 else np.ones_like(centre)
    if p > 2:
        f_rr = np.where(centre, -np.inf, f_rr)
        f_r_over_r = np.where(centre, -np.inf, f_r_over_r)
    hess = _radial_hessian(e, f_rr, f_r_over_r) if p <= 2 else np.where(
        centre[..., None, None], -np.inf, _radial_hessian(e, np.where(centre, 0, f_rr), np.where(centre, 0, f_r_over_r))
    )
    dt = np.full_like(val, spec.a)
    return EvalResult(val, grad, hess, dt, smooth)
