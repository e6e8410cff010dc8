"""Mollifier stack rho -> phi -> phi_eps -> varphi_eps, coupling constant, beta.

rho is a compactly supported radial probability density on R^2.  phi is its
self-correlation phi(y) = int rho(y') rho(y'-y) dy', an even density with
support radius 2M.  Everything downstream consumes phi through a radial table:
the rescalings phi_eps(y) = eps^-2 phi(y/eps) and varphi_eps(x) =
phi_eps(sqrt(2) x), the radial pdf p(r) = 2 pi r phi(r) with its CDF (for
sampling and log-moments), and the log-moment

    L_phi = int int phi(y) phi(y') log|y - y'| dy dy'.

L_phi reduces exactly to one dimension through the circular mean-value
property of log: (1/2pi) int_0^2pi log|a - b e^(i theta)| d theta
= log max(a, b), so L_phi = 2 int p(r) F(r) log r dr with F the radial CDF.
A phi-pair Monte Carlo oracle stays available for cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline

from .numcore import (DomainError, QuadSpec, EULER_MASCHERONI, quad_1d,
                      rng_stream)

__all__ = [
    "MollifierSpec",
    "PhiKernel",
    "CriticalParams",
    "reference_mollifier",
    "uniform_disk_mollifier",
    "mollifier_from_profile",
    "mollifier_by_name",
    "build_phi",
    "phi_eps",
    "varphi_eps",
    "coupling_constant",
    "eps_bar",
    "beta_of",
    "critical_params",
]


@dataclass(frozen=True)
class MollifierSpec:
    """Radial density rho with compact support radius M.

    rho_radial maps radius r (ndarray) to density values; zero for r > M.
    grid_resolution sets the phi-table node count.
    """

    name: str
    rho_radial: Callable[[np.ndarray], np.ndarray]
    support_radius: float
    grid_resolution: int = 1024

    def rho(self, x) -> float:
        """rho evaluated at a 2D point."""
        v = np.asarray(x, dtype=float)
        return float(self.rho_radial(np.atleast_1d(np.linalg.norm(v)))[0])

    def validate(self, rel_tol: float = 1e-8) -> None:
        """Check normalization int rho = 1 and nonnegativity on the support."""
        rs = np.linspace(0.0, self.support_radius, 4001)
        vals = self.rho_radial(rs)
        if np.any(vals < -1e-12):
            raise DomainError(f"mollifier {self.name!r} is negative somewhere")
        mass = 2.0 * math.pi * quad_1d(
            lambda r: r * self.rho_radial(r), 0.0, self.support_radius,
            QuadSpec(abs_tol=1e-12, rel_tol=1e-12))
        if abs(mass - 1.0) > rel_tol:
            raise DomainError(
                f"mollifier {self.name!r} not normalized: int rho = {mass!r}")


def reference_mollifier(support_radius: float = 1.0,
                        grid_resolution: int = 1024) -> MollifierSpec:
    """C^2 radial bump rho(x) = c (1 - |x/M|^2)^3 on |x| <= M.

    Normalization: c = 4/(pi M^2) since 2 pi int_0^1 (1-r^2)^3 r dr = pi/4.
    """
    M = float(support_radius)
    c = 4.0 / (math.pi * M * M)

    def rho_radial(r):
        r = np.asarray(r, dtype=float)
        u = np.clip(1.0 - (r / M) ** 2, 0.0, None)
        return c * u ** 3

    return MollifierSpec("bump", rho_radial, M, grid_resolution)


def uniform_disk_mollifier(support_radius: float = 1.0,
                           grid_resolution: int = 1024) -> MollifierSpec:
    """Uniform density on the disk of radius M; phi has a closed lens form."""
    M = float(support_radius)
    c = 1.0 / (math.pi * M * M)

    def rho_radial(r):
        return np.where(np.asarray(r, dtype=float) <= M, c, 0.0)

    return MollifierSpec("uniform", rho_radial, M, grid_resolution)


def mollifier_from_profile(radii: np.ndarray, values: np.ndarray,
                           name: str = "custom",
                           grid_resolution: int = 1024) -> MollifierSpec:
    """Custom radial mollifier from a tabulated profile (e.g. CSV radius,value)."""
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    if radii.ndim != 1 or radii.size < 4 or np.any(np.diff(radii) <= 0):
        raise DomainError("profile radii must be strictly increasing, >= 4 nodes")
    M = float(radii[-1])
    spline = CubicSpline(radii, values, bc_type="natural")

    def rho_radial(r):
        r = np.asarray(r, dtype=float)
        out = np.where((r >= radii[0]) & (r <= M), spline(np.clip(r, radii[0], M)), 0.0)
        return np.where(r < radii[0], values[0], out)

    spec = MollifierSpec(name, rho_radial, M, grid_resolution)
    spec.validate()
    return spec


def mollifier_by_name(name: str, support_radius: float = 1.0) -> MollifierSpec:
    if name == "bump":
        return reference_mollifier(support_radius)
    if name == "uniform":
        return uniform_disk_mollifier(support_radius)
    raise DomainError(f"unknown mollifier {name!r} (use 'bump', 'uniform', or a profile file)")


@dataclass(frozen=True)
class PhiKernel:
    """Self-correlation phi of a mollifier, tabulated radially.

    phi is an even probability density with support radius 2M.  Carries the
    radial pdf/CDF of |Y| for Y ~ phi, the single log-moment
    int phi(y) log|y| dy, and the pair log-moment L_phi.
    """

    spec: MollifierSpec
    r_nodes: np.ndarray
    phi_values: np.ndarray
    support_radius: float
    log_moment: float              # L_phi, the pair moment
    log_moment_single: float       # int phi(y) log|y| dy
    _spline: CubicSpline = field(repr=False, default=None)
    _cdf: np.ndarray = field(repr=False, default=None)

    def phi_radial(self, r):
        """phi(|y|) for radii r (vectorized)."""
        r = np.abs(np.asarray(r, dtype=float))
        out = self._spline(np.clip(r, 0.0, self.support_radius))
        return np.where(r <= self.support_radius, np.clip(out, 0.0, None), 0.0)

    def phi(self, y) -> float:
        """phi at a 2D point."""
        v = np.asarray(y, dtype=float)
        return float(self.phi_radial(np.atleast_1d(np.linalg.norm(v)))[0])

    def radial_pdf(self, r):
        """pdf of |Y|: p(r) = 2 pi r phi(r)."""
        r = np.asarray(r, dtype=float)
        return 2.0 * math.pi * r * self.phi_radial(r)

    def radial_cdf(self, r):
        r = np.asarray(r, dtype=float)
        return np.interp(r, self.r_nodes, self._cdf, left=0.0, right=1.0)

    def sample_radius(self, u):
        """Inverse-CDF radius samples from uniforms u in [0,1)."""
        return np.interp(u, self._cdf, self.r_nodes)

    def sample_points(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n iid samples from phi as an (n, 2) array."""
        r = self.sample_radius(rng.random(n))
        th = rng.uniform(0.0, 2.0 * math.pi, n)
        return np.column_stack([r * np.cos(th), r * np.sin(th)])

    def mass(self) -> float:
        """int phi (should be 1), integrated from the interpolated profile."""
        return quad_1d(lambda r: self.radial_pdf(r), 0.0, self.support_radius,
                       QuadSpec(abs_tol=1e-12, rel_tol=1e-10))


_THETA_X, _THETA_W = leggauss(48)


def _phi_profile_node(spec: MollifierSpec, r: float, quad: QuadSpec) -> float:
    """phi(r) = int rho(z) rho(z - y) dz at |y| = r, radial rho.

    Polar form: int_0^M r' rho(r') * 2 int_0^theta*(r, r') rho(d(theta)) dtheta
    with d^2 = r^2 + r'^2 - 2 r r' cos(theta); theta* clips to the support so
    the angular integrand is smooth and Gauss nodes converge fast.
    """
    M = spec.support_radius

    def outer(rp: np.ndarray) -> np.ndarray:
        rp = np.asarray(rp, dtype=float)
        if r == 0.0:
            return rp * spec.rho_radial(rp) ** 2 * 2.0 * math.pi
        with np.errstate(divide="ignore", invalid="ignore"):
            cstar = (r * r + rp * rp - M * M) / (2.0 * r * rp)
        cstar = np.where(rp > 0, cstar, 1.0)
        theta_max = np.arccos(np.clip(cstar, -1.0, 1.0))
        # (n, 48) angular node matrix, rescaled per row
        th = 0.5 * theta_max[:, None] * (_THETA_X[None, :] + 1.0)
        d = np.sqrt(np.maximum(
            r * r + (rp * rp)[:, None] - 2.0 * r * rp[:, None] * np.cos(th), 0.0))
        ang = 0.5 * theta_max * (spec.rho_radial(d.ravel()).reshape(d.shape)
                                 @ _THETA_W)
        return rp * spec.rho_radial(rp) * 2.0 * ang

    return quad_1d(outer, 0.0, M, quad)


def build_phi(spec: MollifierSpec, quad: QuadSpec = QuadSpec(1e-11, 1e-9, 40)) -> PhiKernel:
    """Tabulate phi as the self-correlation of rho and compute its log-moments."""
    spec.validate()
    M = spec.support_radius
    n = spec.grid_resolution
    r_nodes = np.linspace(0.0, 2.0 * M, n)
    vals = np.array([_phi_profile_node(spec, float(r), quad) for r in r_nodes])
    vals[-1] = 0.0
    spline = CubicSpline(r_nodes, vals, bc_type=((1, 0.0), (1, 0.0)))

    pdf = 2.0 * math.pi * r_nodes * vals
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(r_nodes))])
    cdf /= cdf[-1]

    kernel = PhiKernel(spec, r_nodes, vals, 2.0 * M, math.nan, math.nan, spline, cdf)

    # single moment E[log R]; r log r is bounded, log singularity is integrable
    lm1 = quad_1d(lambda r: kernel.radial_pdf(r) * np.log(r),
                  1e-300, 2.0 * M, quad, singular_left="log")
    # pair moment via the circular mean-value reduction:
    # L_phi = E[log max(R, R')] = 2 int p(r) F(r) log r dr
    lphi = quad_1d(lambda r: 2.0 * kernel.radial_pdf(r) * kernel.radial_cdf(r) * np.log(r),
                   1e-300, 2.0 * M, quad, singular_left="log")
    return PhiKernel(spec, r_nodes, vals, 2.0 * M, lphi, lm1, spline, cdf)


def log_moment_mc_oracle(kernel: PhiKernel, n: int = 400_000,
                         seed: int = 20260809) -> tuple[float, float]:
    """Monte Carlo oracle for L_phi: mean log|Y - Y'| over phi x phi pairs."""
    rng = rng_stream(seed, 0)
    y = kernel.sample_points(rng, n)
    yp = kernel.sample_points(rng, n)
    d = np.linalg.norm(y - yp, axis=1)
    d = d[d > 0]
    vals = np.log(d)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size))


def phi_eps(kernel: PhiKernel, eps: float, y) -> float:
    """phi_eps(y) = eps^-2 phi(y/eps)."""
    if not (0.0 < eps <= 1.0):
        raise DomainError(f"phi_eps requires 0 < eps <= 1, got {eps}")
    v = np.asarray(y, dtype=float)
    return float(kernel.phi_radial(np.atleast_1d(np.linalg.norm(v) / eps))[0]) / (eps * eps)


def varphi_eps(kernel: PhiKernel, eps: float, x) -> float:
    """varphi_eps(x) = phi_eps(sqrt(2) x); support radius is sqrt(2) M."""
    if not (0.0 < eps <= 1.0):
        raise DomainError(f"varphi_eps requires 0 < eps <= 1, got {eps}")
    v = np.asarray(x, dtype=float)
    r = math.sqrt(2.0) * float(np.linalg.norm(v))
    return float(kernel.phi_radial(np.atleast_1d(r / eps))[0]) / (eps * eps)


def varphi_radial(kernel: PhiKernel, eps: float, r):
    """Vectorized varphi_eps at radii r from the origin."""
    r = np.asarray(r, dtype=float)
    return kernel.phi_radial(math.sqrt(2.0) * r / eps) / (eps * eps)


def coupling_constant(eps: float, lam: float) -> float:
    """Critical coupling 2 pi / log(1/eps) + 2 pi lam / log^2(1/eps)."""
    if not (0.0 < eps < 1.0):
        raise DomainError(f"coupling_constant requires 0 < eps < 1, got {eps}")
    L = math.log(1.0 / eps)
    return 2.0 * math.pi / L + 2.0 * math.pi * lam / (L * L)

def eps_bar(lam: float) -> float:
    """Sup of the eps-range with positive coupling.

    Lambda_eps > 0 iff log(1/eps) + lam > 0, so any eps < 1 works for
    lam >= 0 and eps < e^lam for lam < 0 (closed form, no solve needed).
    """
    return 1.0 if lam >= 0.0 else math.exp(lam)


def beta_of(kernel: PhiKernel, lam: float) -> float:
    """Point-interaction parameter: log(beta)/2 = -L_phi + log 2 + lam - gamma_EM."""
    if not math.isfinite(kernel.log_moment):
        raise DomainError("kernel log moment is not finite")
    return math.exp(2.0 * (-kernel.log_moment + math.log(2.0) + lam
                           - EULER_MASCHERONI))


@dataclass(frozen=True)
class CriticalParams:
    """(eps, lambda) with the derived coupling and point-interaction beta."""

    eps: float
    lam: float
    coupling: float
    beta: float

    def __post_init__(self):
        if not (0.0 < self.eps < 1.0):
            raise DomainError(f"eps must be in (0,1), got {self.eps}")
        if self.coupling <= 0.0:
            raise DomainError(
                f"coupling must be positive: eps={self.eps} exceeds "
                f"eps_bar(lam)={eps_bar(self.lam)}")


def critical_params(kernel: PhiKernel, eps: float, lam: float) -> CriticalParams:
    if eps >= eps_bar(lam):
        raise DomainError(f"eps={eps} not below eps_bar({lam})={eps_bar(lam)}")
    return CriticalParams(eps, lam, coupling_constant(eps, lam),
                          beta_of(kernel, lam))


@lru_cache(maxsize=4)
def cached_phi(name: str = "bump", support_radius: float = 1.0) -> PhiKernel:
    """Singleton phi kernels for the named mollifiers (builds are ~1 s)."""
    return build_phi(mollifier_by_name(name, support_radius))
