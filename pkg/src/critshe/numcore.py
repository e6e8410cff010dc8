"""Shared numerical substrate: special functions, adaptive quadrature, RNG streams.

Everything downstream (heat-kernel expansions, delta-Bose kernels, operator
identities) routes its integration through ``quad_1d``/``quad_2d`` and its
randomness through ``rng_stream``.  The quadrature is nested-Gauss adaptive
bisection; endpoint singularities of power or log type are declared by the
caller and removed by substitution or geometric panel splitting, which is
enough for every integrand in this project (worst cases: t^(-1/2), 1/t with
log-spaced mass, log|x| in 2D).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special as sp_special

__all__ = [
    "QuadSpec",
    "Estimate",
    "EULER_MASCHERONI",
    "DomainError",
    "RefinementExhausted",
    "gamma_fn",
    "exp_integral_e1",
    "quad_1d",
    "quad_2d",
    "quad_disk",
    "rng_stream",
    "gauss_hermite_2d",
]


class DomainError(ValueError):
    """Input outside an operation's mathematical domain."""


class RefinementExhausted(RuntimeError):
    """Adaptive quadrature hit its depth limit; carries the best estimate."""

    def __init__(self, message: str, best_estimate: float, error_estimate: float):
        super().__init__(message)
        self.best_estimate = best_estimate
        self.error_estimate = error_estimate


@dataclass(frozen=True)
class QuadSpec:
    """Tolerances and refinement budget for adaptive quadrature."""

    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_refinement_depth: int = 48

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be strictly positive")
        if self.max_refinement_depth < 1:
            raise ValueError("max_refinement_depth must be >= 1")


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo value with standard error; the uniform stochastic return type."""

    mean: float
    std_err: float
    n_samples: int
    low_confidence: bool = False

    def __post_init__(self):
        if self.std_err < 0:
            raise ValueError("std_err must be nonnegative")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")

    def agrees_with(self, other: "Estimate", n_sigma: float = 4.0,
                    systematic: float = 0.0) -> bool:
        """Whether two estimates agree within n_sigma combined stderr plus a
        relative systematic budget."""
        gap = abs(self.mean - other.mean)
        sigma = math.hypot(self.std_err, other.std_err)
        scale = max(abs(self.mean), abs(other.mean))
        return gap <= n_sigma * sigma + systematic * scale


def mc_estimate(samples: np.ndarray, low_confidence: bool = False) -> Estimate:
    """Reduce an array of iid samples to an Estimate."""
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    if n < 1:
        raise ValueError("need at least one sample")
    mean = float(np.mean(samples))
    if n == 1:
        return Estimate(mean, 0.0, 1, low_confidence)
    se = float(np.std(samples, ddof=1) / math.sqrt(n))
    return Estimate(mean, se, n, low_confidence)


def merge_estimates(parts: list[Estimate]) -> Estimate:
    """Associative mean/variance merge of shard estimates (equal-weight samples)."""
    n = sum(p.n_samples for p in parts)
    mean = sum(p.mean * p.n_samples for p in parts) / n
    # within-shard sumsq + between-shard correction
    ss = 0.0
    for p in parts:
        ss += (p.n_samples - 1) * (p.std_err ** 2 * p.n_samples)
        ss += p.n_samples * (p.mean - mean) ** 2
    se = math.sqrt(ss / (n - 1) / n) if n > 1 else 0.0
    return Estimate(mean, se, n, any(p.low_confidence for p in parts))


# ---------------------------------------------------------------------------
# special functions and constants
# ---------------------------------------------------------------------------

#: Euler-Mascheroni constant, 18 digits; validated at import against the
#: integral representation gamma = -int_0^inf e^(-t) log t dt.  Three distinct
#: expansions in this package consume it, so silent drift is fatal here.
EULER_MASCHERONI = 0.577215664901532861


def gamma_fn(u: float) -> float:
    """Euler gamma function on (0, inf)."""
    if u <= 0:
        raise DomainError(f"gamma_fn requires u > 0, got {u}")
    return math.gamma(u)


def exp_integral_e1(x: float) -> float:
    """Exponential integral E1(x) = int_x^inf e^(-t)/t dt for x > 0."""
    if x <= 0:
        raise DomainError(f"exp_integral_e1 requires x > 0, got {x}")
    return float(sp_special.exp1(x))


# ---------------------------------------------------------------------------
# adaptive quadrature
# ---------------------------------------------------------------------------

_GL_LO_X, _GL_LO_W = leggauss(10)
_GL_HI_X, _GL_HI_W = leggauss(21)


def _panel(f, a: float, b: float):
    """High/low nested Gauss estimates on [a, b]; returns (value, err)."""
    h = 0.5 * (b - a)
    m = 0.5 * (a + b)
    fh = f(m + h * _GL_HI_X)
    vh = h * float(np.dot(_GL_HI_W, fh))
    fl = f(m + h * _GL_LO_X)
    vl = h * float(np.dot(_GL_LO_W, fl))
    return vh, abs(vh - vl)


def quad_1d(f: Callable[[np.ndarray], np.ndarray], a: float, b: float,
            spec: QuadSpec = QuadSpec(), *, singular_left: Optional[str] = None,
            singular_right: Optional[str] = None, power: float = 0.5) -> float:
    """Adaptive 1D integral of a vectorized integrand over (a, b).

    Endpoint singularities must be declared: "power" applies the substitution
    x = a + u^(1/(1-power)) removing an (x-a)^(-power) blowup, "log" (or any
    integrable singularity of unknown type) triggers geometric panel splitting
    toward the endpoint.  Raises RefinementExhausted (carrying the best
    estimate) when the depth budget cannot meet the tolerances.
    """
    if not (a < b):
        raise DomainError(f"quad_1d requires a < b, got [{a}, {b}]")
    if singular_left == "power":
        q = 1.0 - power
        g = lambda u: f(a + u ** (1.0 / q)) * (u ** (1.0 / q - 1.0)) / q
        return quad_1d(g, 0.0, (b - a) ** q, spec, singular_right=singular_right)
    if singular_right == "power":
        q = 1.0 - power
        g = lambda u: f(b - u ** (1.0 / q)) * (u ** (1.0 / q - 1.0)) / q
        return quad_1d(g, 0.0, (b - a) ** q, spec, singular_right=singular_left)

    panels: list[tuple[float, float]] = []
    if singular_left == "log":
        panels.extend(_geometric_panels(a, b, toward_left=True))
    elif singular_right == "log":
        panels.extend(_geometric_panels(a, b, toward_left=False))
    else:
        panels.append((a, b))

    total, err_total = 0.0, 0.0
    worst_depth_hit = False
    for (pa, pb) in panels:
        v, e, hit = _adapt(f, pa, pb, spec)
        total += v
        err_total += e
        worst_depth_hit = worst_depth_hit or hit
    tol = max(spec.abs_tol, spec.rel_tol * abs(total))
    if worst_depth_hit and err_total > tol:
        raise RefinementExhausted(
            f"quad_1d did not converge on [{a}, {b}]: err~{err_total:.3e}",
            total, err_total)
    return total


def _geometric_panels(a: float, b: float, toward_left: bool, n: int = 52):
    """Dyadic panels accumulating toward one endpoint, innermost first."""
    L = b - a
    cuts = [L * 2.0 ** (-k) for k in range(n, -1, -1)]
    out = [(a, a + cuts[0])] if toward_left else [(b - cuts[0], b)]
    for c0, c1 in zip(cuts[:-1], cuts[1:]):
        out.append((a + c0, a + c1) if toward_left else (b - c1, b - c0))
    return out


def _adapt(f, a: float, b: float, spec: QuadSpec):
    """Globally adaptive bisection: refine the worst panel until the summed
    error meets the tolerance.  Returns (value, err, budget_hit)."""
    import heapq

    v, e = _panel(f, a, b)
    heap = [(-e, 0, a, b, v, e, 0)]
    tick = 1
    total_v, live_e, frozen_e = v, e, 0.0
    budget = 64 * spec.max_refinement_depth
    splits = 0
    while heap:
        tol = max(spec.abs_tol, spec.rel_tol * abs(total_v))
        if live_e + frozen_e <= tol:
            break
        _, _, pa, pb, pv, pe, d = heapq.heappop(heap)
        width_floor = 1e-15 * (abs(pa) + abs(pb) + 1e-300)
        if d >= spec.max_refinement_depth or (pb - pa) <= width_floor \
                or splits >= budget:
            frozen_e += pe
            live_e -= pe
            continue
        m = 0.5 * (pa + pb)
        v1, e1 = _panel(f, pa, m)
        v2, e2 = _panel(f, m, pb)
        splits += 1
        total_v += v1 + v2 - pv
        live_e += e1 + e2 - pe
        heapq.heappush(heap, (-e1, tick, pa, m, v1, e1, d + 1))
        heapq.heappush(heap, (-e2, tick + 1, m, pb, v2, e2, d + 1))
        tick += 2
    err = live_e + frozen_e
    hit = err > max(spec.abs_tol, spec.rel_tol * abs(total_v))
    return total_v, err, hit


def quad_2d(f: Callable[[np.ndarray, np.ndarray], np.ndarray],
            xlim: tuple[float, float], ylim: tuple[float, float],
            spec: QuadSpec = QuadSpec()) -> float:
    """Tensorized adaptive integral over a rectangle.

    f must broadcast over same-shape x/y arrays.  The outer (x) integral is
    adaptive over inner adaptive y-integrals, with the inner tolerance
    tightened one notch.
    """
    inner_spec = QuadSpec(abs_tol=0.1 * spec.abs_tol, rel_tol=0.1 * spec.rel_tol,
                          max_refinement_depth=spec.max_refinement_depth)

    def outer(xs: np.ndarray) -> np.ndarray:
        vals = np.empty_like(xs, dtype=float)
        for i, x in np.ndenumerate(xs):
            vals[i] = quad_1d(lambda ys: f(np.full_like(ys, x), ys),
                              ylim[0], ylim[1], inner_spec)
        return vals

    return quad_1d(outer, xlim[0], xlim[1], spec)


def quad_disk(f: Callable[[np.ndarray, np.ndarray], np.ndarray], radius: float,
              center: tuple[float, float] = (0.0, 0.0),
              spec: QuadSpec = QuadSpec(), n_theta: int = 64) -> float:
    """Integral over a disk in polar form.

    The angular integral uses the periodic trapezoid rule (spectrally accurate
    for smooth integrands); the radial integral is adaptive.  One angular
    doubling serves as the convergence check.
    """
    coarse = _quad_disk_once(f, radius, center, spec, n_theta)
    fine = _quad_disk_once(f, radius, center, spec, 2 * n_theta)
    if abs(fine - coarse) > 50 * max(spec.abs_tol, spec.rel_tol * abs(fine)):
        fine = _quad_disk_once(f, radius, center, spec, 4 * n_theta)
    return fine


def _quad_disk_once(f, radius, center, spec, n_theta):
    cx, cy = center
    theta = np.linspace(0.0, 2.0 * math.pi, n_theta, endpoint=False)
    ct, st = np.cos(theta), np.sin(theta)

    def radial(rs: np.ndarray) -> np.ndarray:
        out = np.zeros_like(rs, dtype=float)
        for i, r in np.ndenumerate(rs):
            out[i] = r * np.mean(f(cx + r * ct, cy + r * st)) * 2.0 * math.pi
        return out

    return quad_1d(radial, 0.0, radius, spec)


# ---------------------------------------------------------------------------
# Gauss-Hermite helper for Gaussian-weighted 2D integrals
# ---------------------------------------------------------------------------

def gauss_hermite_2d(n: int = 24):
    """Nodes/weights for E[g(Z)], Z ~ N(0, I_2): returns flat (zx, zy, w).

    roots_hermitenorm weights integrate against e^(-x^2/2), so each axis is
    normalized by sqrt(2 pi).
    """
    x, w = sp_special.roots_hermitenorm(n)
    zx = np.repeat(x, n)
    zy = np.tile(x, n)
    ww = np.outer(w, w).ravel() / (2.0 * math.pi)
    return zx, zy, ww


# ---------------------------------------------------------------------------
# randomness contract
# ---------------------------------------------------------------------------

def rng_stream(seed: int, stream_id: int) -> np.random.Generator:
    """Deterministic, replayable Gaussian/uniform source.

    Identical (seed, stream_id) always yields bit-identical sequences;
    distinct stream_ids are statistically independent.  Streams are
    single-owner: one per worker, never shared.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream_id,))
    return np.random.Generator(np.random.PCG64(ss))


def _validate_euler_mascheroni() -> None:
    """Abort import if the stored gamma_EM drifts from -int_0^inf e^-t log t dt."""
    spec = QuadSpec(abs_tol=1e-14, rel_tol=1e-14)
    part = quad_1d(lambda t: -np.exp(-t) * np.log(t), 1e-300, 1.0, spec,
                   singular_left="log")
    part += quad_1d(lambda t: -np.exp(-t) * np.log(t), 1.0, 60.0, spec)
    if abs(part - EULER_MASCHERONI) > 1e-12:
        raise AssertionError(
            f"Euler-Mascheroni validation failed: integral {part!r} vs "
            f"stored {EULER_MASCHERONI!r}")


_validate_euler_mascheroni()
