"""2D Gaussian heat kernel, its time-integrated expansion, and panel inequalities.

The central objects: P_t(x) = (1/2 pi t) exp(-|x|^2/2t), the closed form

    int_0^T P_2r(y) dr = E1(|y|^2 / 4T) / 4 pi
                       = (1/4 pi) log(4T/|y|^2) - gamma_EM/4 pi + eps71(4T/|y|^2),

and the nonnegative remainder eps71 with its explicit-constant bounds.  The
E1 closed form (substitution t = |y|^2/4r in the defining integral) is the
primary route everywhere; defining-integral quadrature stays available as the
independent oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numcore import (DomainError, QuadSpec, EULER_MASCHERONI,
                      exp_integral_e1, quad_1d)

__all__ = [
    "RemainderEval",
    "heat_kernel",
    "heat_kernel_radial",
    "integrated_kernel",
    "integrated_kernel_quadrature",
    "expansion_remainder",
    "macdonald_expansion_check",
    "macdonald_lhs_cosh_route",
    "ratio_bound_check",
    "RATIO_BOUND_CONSTANT",
]

_TIGHT = QuadSpec(abs_tol=1e-14, rel_tol=1e-13)


@dataclass(frozen=True)
class RemainderEval:
    """Value of the expansion remainder eps71 at argument a = 4T/|y|^2.

    Invariants (explicit constants re-derived from 1 - e^-t <= t):
    value >= 0; value <= a^-1/(4 pi) for a >= 1; value <= (1 + log^- a)/(4 pi)
    for a < 1.
    """

    a: float
    value: float


def _vec2(x) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (2,) or not np.all(np.isfinite(v)):
        raise DomainError(f"expected a finite 2D point, got {x!r}")
    return v


def heat_kernel(t: float, x, y=(0.0, 0.0)) -> float:
    """P_t(x, y) = (1/2 pi t) exp(-|x - y|^2 / 2t)."""
    if t <= 0:
        raise DomainError(f"heat_kernel requires t > 0, got {t}")
    d = _vec2(x) - _vec2(y)
    return float(np.exp(-(d @ d) / (2.0 * t)) / (2.0 * math.pi * t))


def heat_kernel_radial(t, r2):
    """Vectorized P_t at squared radius r2; t may broadcast against r2.

    Evaluated in log space so extreme t underflows to 0 rather than producing
    0 * inf; t <= 0 returns 0 (the pointwise limit off the diagonal, which is
    the only way integrators probe it).
    """
    t = np.asarray(t, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        expo = -r2 / (2.0 * t) - np.log(2.0 * math.pi * t)
        out = np.exp(expo)
    return np.where(t > 0.0, np.nan_to_num(out, nan=0.0, posinf=np.inf), 0.0)


def integrated_kernel(T: float, y) -> float:
    """int_0^T P_2r(y) dr in closed form E1(|y|^2/4T)/4 pi."""
    if T <= 0:
        raise DomainError(f"integrated_kernel requires T > 0, got {T}")
    yv = _vec2(y)
    r2 = float(yv @ yv)
    if r2 == 0.0:
        raise DomainError("integrated_kernel is singular at y = 0")
    return exp_integral_e1(r2 / (4.0 * T)) / (4.0 * math.pi)


def integrated_kernel_quadrature(T: float, y, spec: QuadSpec = _TIGHT) -> float:
    """Defining-integral oracle for integrated_kernel (independent route)."""
    yv = _vec2(y)
    r2 = float(yv @ yv)
    if T <= 0 or r2 == 0.0:
        raise DomainError("requires T > 0 and y != 0")
    # integrand (1/4 pi r) e^(-r2/4r): vanishing at 0, log-mass spread in r
    lo = min(r2 / 200.0, T / 2.0)

    def f(r):
        return np.exp(-r2 / (4.0 * r)) / (4.0 * math.pi * r)

    val = quad_1d(f, lo, T, spec, singular_left="log")
    # sub-lo tail: substitute u = r2/4r, bounded by E1 tail
    val += quad_1d(lambda u: np.exp(-u) / (4.0 * math.pi * u),
                   r2 / (4.0 * lo), r2 / (4.0 * lo) + 60.0, spec)
    return val


def expansion_remainder(a: float) -> RemainderEval:
    """eps71(a) = int_0^(1/a) (1_(0,1](t) - e^-t)/(4 pi t) dt + log^-(a)/4 pi.

    Computed from its defining integral, not from the E1 closed form, so the
    expansion identity test has two independent sides.
    """
    if a <= 0:
        raise DomainError(f"expansion_remainder requires a > 0, got {a}")

    def near(t):  # (1 - e^-t)/t is analytic with limit 1 at t = 0
        return -np.expm1(-t) / (4.0 * math.pi * t)

    if a >= 1.0:
        value = quad_1d(near, 1e-300, 1.0 / a, _TIGHT, singular_left="log")
        return RemainderEval(a, value)
    upper = min(1.0 / a, 80.0)  # e^-t/t below 2e-37 past t = 80
    value = quad_1d(near, 1e-300, 1.0, _TIGHT, singular_left="log")
    value -= quad_1d(lambda t: np.exp(-t) / (4.0 * math.pi * t), 1.0, upper, _TIGHT)
    value += -math.log(a) / (4.0 * math.pi)
    return RemainderEval(a, value)


def expansion_identity_gap(T: float, y) -> float:
    """Residual of Lemma-style expansion:
    integrated_kernel - [(1/4pi) log(4T/|y|^2) - gamma_EM/4pi] - eps71."""
    yv = _vec2(y)
    a = 4.0 * T / float(yv @ yv)
    lead = math.log(a) / (4.0 * math.pi) - EULER_MASCHERONI / (4.0 * math.pi)
    return integrated_kernel(T, y) - lead - expansion_remainder(a).value


def macdonald_expansion_check(q: float, x, eps: float,
                              spec: QuadSpec = _TIGHT) -> tuple[float, float]:
    """Both sides of the small-eps expansion of the Laplace-in-time kernel.

    lhs = int_0^inf (e^-qt / 4 pi t) exp(-eps^2 |x|^2 / 4t) dt  (quadrature,
    log-time substitution); rhs = log(1/eps)/2pi + ((log 4 - log q)/2
    - log|x| - gamma_EM)/2pi.  Returns (lhs, rhs); their gap is o(1).
    """
    xv = _vec2(x)
    r2 = float(xv @ xv)
    if q <= 0 or r2 == 0.0 or not (0.0 < eps < 1.0):
        raise DomainError("requires q > 0, x != 0, 0 < eps < 1")
    b = eps * eps * r2 / 4.0
    lo, hi = math.log(b / 60.0), math.log(max(60.0 / q, 60.0 * b))

    def f(v):  # t = e^v
        t = np.exp(v)
        return np.exp(-q * t - b / t) / (4.0 * math.pi)

    lhs = quad_1d(f, lo, hi, spec)
    rhs = (math.log(1.0 / eps) / (2.0 * math.pi)
           + ((math.log(4.0) - math.log(q)) / 2.0 - 0.5 * math.log(r2)
              - EULER_MASCHERONI) / (2.0 * math.pi))
    return lhs, rhs


def macdonald_lhs_cosh_route(q: float, x, eps: float,
                             spec: QuadSpec = _TIGHT) -> float:
    """Independent route for the macdonald lhs: K0(z)/2pi with
    K0(z) = int_0^inf e^(-z cosh u) du, z = eps |x| sqrt(q)."""
    xv = _vec2(x)
    z = eps * math.sqrt(float(xv @ xv)) * math.sqrt(q)
    umax = math.acosh(max(60.0 / z, 2.0))
    k0 = quad_1d(lambda u: np.exp(-z * np.cosh(u)), 0.0, umax, spec)
    return k0 / (2.0 * math.pi)


#: Explicit constant for the peer-decay ratio bound, fixed by re-deriving the
#: triangle-inequality step: |y|^p <= 2^(p-1)(|y-y'|^p + |y'|^p) for p >= 1,
#: then 1 + 2^(p-1)(...) <= 2^(p+1) max-combination.  2^(p+1) dominates for
#: all p >= 0.
RATIO_BOUND_CONSTANT = lambda p: 2.0 ** (p + 1.0)


def ratio_bound_check(p: float, samples) -> bool:
    """Check 1/(1+|y-y'|^p) <= 2^(p+1) (1+|y'|^p)/(1+|y|^p) on (y, y') pairs."""
    if p < 0:
        raise DomainError(f"ratio_bound_check requires p >= 0, got {p}")
    C = RATIO_BOUND_CONSTANT(p)
    for (y, yp) in samples:
        y = _vec2(y)
        yp = _vec2(yp)
        lhs = 1.0 / (1.0 + float(np.linalg.norm(y - yp)) ** p)
        rhs = C * (1.0 + float(np.linalg.norm(yp)) ** p) / (1.0 + float(np.linalg.norm(y)) ** p)
        if lhs > rhs:
            return False
    return True
