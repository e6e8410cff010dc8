"""Martingale-problem operators: the integro-multiplication operator L, its
limit form L0, the pair transform L1_ring with its asymptotic expansion
residual, the linear transforms L3/L4, the solvability construction, and the
space-time approximate identity.

All spatial convolutions reduce to 1D time quadratures through two Gaussian
identities used throughout:

    P_t(x')^2 = (1/4 pi t) P_(t/2)(x'),
    P_t(a) P_t(b) = P_(t/2)((a+b)/2) P_2t(a - b),

so the common difference integral becomes

    DIFF(f, x, s) = int_0^(T-s) (1/4 pi t') [ (P_(t'/2) * f(., s+t'))(x)
                                              - f(x, s) ] dt',

whose integrand is bounded as t' -> 0 (the printed double integral is
absolutely convergent but its raw form has a non-integrable kernel mass, all
of it carried by the increment).  Heat smoothings (P_a * f) use a closed form
when the test function provides one and Gauss-Hermite otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss

from .numcore import (DomainError, QuadSpec, EULER_MASCHERONI, quad_1d,
                      exp_integral_e1, gauss_hermite_2d)
from .heatkernel import heat_kernel_radial
from .mollifier import PhiKernel, coupling_constant, eps_bar
from . import dbg

__all__ = [
    "TestFunction",
    "GaussianTestFunction",
    "ConstantTestFunction",
    "OperatorContext",
    "L_op",
    "L0_op",
    "L1_ring",
    "L1_ring_direct_oracle",
    "expansion_residual",
    "L3_0",
    "L4_0",
    "solve_qv",
    "spdelta",
    "diff_integral",
    "diff_integral_direct_oracle",
]

_GH_X, _GH_Y, _GH_W = gauss_hermite_2d(24)
_G12_X, _G12_W = leggauss(12)
_G16_X, _G16_W = leggauss(16)


def _gauss_on(a: float, b: float, x, w):
    h = 0.5 * (b - a)
    return a + h * (x + 1.0), h * w


class TestFunction:
    """Function f(x, s) on R^2 x [0, T] with declared polynomial decay.

    Subclasses may provide gradient(x, s) and heat_smoothed(x, a, s)
    = (P_a * f(., s))(x); generic fallbacks use finite differences and
    Gauss-Hermite.
    """

    decay_order: float = 1.0

    def __call__(self, x, s: float) -> float:
        raise NotImplementedError

    def gradient(self, x, s: float) -> np.ndarray:
        xv = np.asarray(x, dtype=float)
        h = 1e-5 * (1.0 + float(np.linalg.norm(xv)))
        gx = (self(xv + [h, 0.0], s) - self(xv - [h, 0.0], s)) / (2.0 * h)
        gy = (self(xv + [0.0, h], s) - self(xv - [0.0, h], s)) / (2.0 * h)
        return np.array([gx, gy])

    def heat_smoothed(self, x, a: float, s: float) -> float:
        if a <= 0:
            return self(x, s)
        xv = np.asarray(x, dtype=float)
        r = math.sqrt(a)
        total = 0.0
        for zx, zy, w in zip(_GH_X, _GH_Y, _GH_W):
            total += w * self(xv - r * np.array([zx, zy]), s)
        return total


class GaussianTestFunction(TestFunction):
    """f(x, s) = amp(s) exp(-|x - c|^2 / (2 sigma2)) with amp(s) = a0 e^(k s);
    closed-form gradient and heat smoothing."""

    def __init__(self, amp: float = 1.0, sigma2: float = 1.0,
                 center=(0.0, 0.0), time_rate: float = 0.0):
        self.amp = float(amp)
        self.sigma2 = float(sigma2)
        self.center = np.asarray(center, dtype=float)
        self.time_rate = float(time_rate)
        self.decay_order = math.inf

    def _a(self, s):
        return self.amp * math.exp(self.time_rate * s)

    def __call__(self, x, s: float) -> float:
        xv = np.asarray(x, dtype=float)
        d2 = float((xv - self.center) @ (xv - self.center))
        return self._a(s) * math.exp(-d2 / (2.0 * self.sigma2))

    def gradient(self, x, s: float) -> np.ndarray:
        xv = np.asarray(x, dtype=float)
        return self(xv, s) * (-(xv - self.center) / self.sigma2)

    def heat_smoothed(self, x, a: float, s: float) -> float:
        xv = np.asarray(x, dtype=float)
        s2 = self.sigma2 + max(a, 0.0)
        d2 = float((xv - self.center) @ (xv - self.center))
        return self._a(s) * (self.sigma2 / s2) * math.exp(-d2 / (2.0 * s2))


class ConstantTestFunction(TestFunction):
    def __init__(self, c: float):
        self.c = float(c)
        self.decay_order = 0.0

    def __call__(self, x, s: float) -> float:
        return self.c

    def gradient(self, x, s: float) -> np.ndarray:
        return np.zeros(2)

    def heat_smoothed(self, x, a: float, s: float) -> float:
        return self.c


@dataclass(frozen=True)
class OperatorContext:
    """Horizon, coupling parameter, and mollifier data entering the operators."""

    T: float
    lam: float
    phi: PhiKernel
    quad: QuadSpec = QuadSpec(1e-10, 1e-9, 30)

    def __post_init__(self):
        if self.T <= 0:
            raise DomainError(f"horizon T must be positive, got {self.T}")


def _log_gauss_nodes(lo: float, hi: float, per_decade: float = 3.0,
                     n_per: int = 12, min_seg: int = 8):
    """Gauss nodes/weights on log-spaced segments of [lo, hi]."""
    decades = math.log10(hi / lo)
    n_seg = max(min_seg, int(math.ceil(per_decade * decades)))
    edges = np.geomspace(lo, hi, n_seg + 1)
    xs, ws = (_G12_X, _G12_W) if n_per == 12 else leggauss(n_per)
    nodes, wts = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        h = 0.5 * (b - a)
        nodes.append(a + h * (xs + 1.0))
        wts.append(h * ws)
    return np.concatenate(nodes), np.concatenate(wts)


def diff_integral(ctx: OperatorContext, f: TestFunction, x, s: float) -> float:
    """DIFF(f, x, s): the increment integral of the operator, reduced to 1D."""
    T = ctx.T
    if not (0.0 <= s < T):
        raise DomainError(f"requires 0 <= s < T, got s={s}, T={T}")
    xv = np.asarray(x, dtype=float)
    span = T - s
    f0 = f(xv, s)
    nodes, wts = _log_gauss_nodes(span * 1e-13, span, per_decade=3.0)
    total = 0.0
    for tp, w in zip(nodes, wts):
        sm = f.heat_smoothed(xv, tp / 2.0, s + tp)
        total += w * (sm - f0) / (4.0 * math.pi * tp)
    return total


def diff_integral_direct_oracle(ctx: OperatorContext, f: TestFunction, x,
                                s: float, r_max: float = 10.0) -> float:
    """Oracle for DIFF keeping the double integral explicit: polar x' grid
    against the squared kernel P_t'(x')^2, log-spaced t'."""
    T = ctx.T
    xv = np.asarray(x, dtype=float)
    span = T - s
    f0 = f(xv, s)
    th = np.linspace(0.0, 2.0 * math.pi, 48, endpoint=False)
    ct, st = np.cos(th), np.sin(th)

    def inner(tp: float) -> float:
        # radius scale sqrt(tp/2); two segments to resolve spike + far field
        spike = 8.0 * math.sqrt(tp / 2.0)
        segs = [(0.0, min(spike, r_max))]
        if spike < r_max:
            segs.append((spike, r_max))
        total = 0.0
        for (lo, hi) in segs:
            rs = lo + 0.5 * (hi - lo) * (_G16_X + 1.0)
            rw = 0.5 * (hi - lo) * _G16_W
            for r, wt in zip(rs, rw):
                pk2 = float(heat_kernel_radial(tp, r * r)) ** 2
                if pk2 == 0.0:
                    continue
                vals = np.array([f(xv - np.array([r * c, r * s_]), s + tp)
                                 for c, s_ in zip(ct, st)])
                total += wt * r * pk2 * float(np.mean(vals) - f0) * 2.0 * math.pi
        return total

    nodes, wts = _log_gauss_nodes(span * 1e-10, span, per_decade=2.5)
    return float(sum(w * inner(float(tp)) for tp, w in zip(nodes, wts)))


def L_op(ctx: OperatorContext, f: TestFunction, x, s: float) -> float:
    """The integro-multiplication operator: multiplication by
    -(1/2pi)(log[4(T-s)]/2 + lam - gamma_EM/2 - L_phi) minus DIFF.

    The log[4(T-s)] (not log(T-s)) matches the assembly of the two
    deterministic limit terms, whose single log-moments cancel and whose
    pair moment survives; with it, the operator, the time kernel, and the
    beta relation balance the solvability identity exactly (checked also by
    the independent pair-transform expansion).
    """
    T = ctx.T
    if not (0.0 <= s < T):
        raise DomainError(f"L_op requires 0 <= s < T, got s={s}")
    coef = -(math.log(4.0 * (T - s)) / 2.0 + ctx.lam - EULER_MASCHERONI / 2.0
             - ctx.phi.log_moment) / (2.0 * math.pi)
    return coef * f(np.asarray(x, dtype=float), s) - diff_integral(ctx, f, x, s)


def L0_op(ctx: OperatorContext, f: TestFunction, x, s: float) -> float:
    """Limit form: log[4(T-s)]/2 and the single moment int phi log|y|."""
    T = ctx.T
    if not (0.0 <= s < T):
        raise DomainError(f"L0_op requires 0 <= s < T, got s={s}")
    coef = -(math.log(4.0 * (T - s)) / 2.0 + ctx.lam - EULER_MASCHERONI / 2.0
             - ctx.phi.log_moment_single) / (2.0 * math.pi)
    return coef * f(np.asarray(x, dtype=float), s) - diff_integral(ctx, f, x, s)


def L1_ring(ctx: OperatorContext, eps: float, f: TestFunction, y, x,
            s: float) -> float:
    """Pair transform
    Lambda_eps int_s^T int f(xt, t) P_(t-s)(eps y + x, xt) P_(t-s)(xt, x) dxt dt,
    collapsed by the Gaussian product rule to
    Lambda_eps int_s^T P_2(t-s)(eps y) (P_2(t-s)... ) evaluated at x + eps y/2."""
    T = ctx.T
    if not (0.0 < eps <= eps_bar(ctx.lam)):
        raise DomainError(f"requires 0 < eps <= eps_bar, got {eps}")
    if not (0.0 <= s < T):
        raise DomainError(f"requires 0 <= s < T, got s={s}")
    lam_eps = coupling_constant(eps, ctx.lam)
    yv = np.asarray(y, dtype=float)
    xv = np.asarray(x, dtype=float)
    b = eps * eps * float(yv @ yv) / 4.0  # P_2h(eps y) cutoff scale
    span = T - s
    lo = max(b / 50.0, span * 1e-30)
    mid = xv + 0.5 * eps * yv
    nodes, wts = _log_gauss_nodes(lo, span, per_decade=3.0)
    total = 0.0
    for h, w in zip(nodes, wts):
        pk = float(heat_kernel_radial(2.0 * h, eps * eps * float(yv @ yv)))
        if pk == 0.0:
            continue
        # product rule: the smoothing runs at time scale (t-s)/2 around the
        # midpoint x + eps y/2
        total += w * pk * f.heat_smoothed(mid, h / 2.0, s + h)
    return lam_eps * total


def L1_ring_direct_oracle(ctx: OperatorContext, eps: float, f: TestFunction,
                          y, x, s: float, r_max: float = 10.0) -> float:
    """Oracle keeping the 2D xt integral explicit (polar around x)."""
    T = ctx.T
    lam_eps = coupling_constant(eps, ctx.lam)
    yv = np.asarray(y, dtype=float)
    xv = np.asarray(x, dtype=float)
    shifted = eps * yv + xv
    th = np.linspace(0.0, 2.0 * math.pi, 64, endpoint=False)
    ct, st = np.cos(th), np.sin(th)

    def inner(h: float) -> float:
        spike = 8.0 * math.sqrt(h) + eps * float(np.linalg.norm(yv))
        segs = [(0.0, min(spike, r_max))]
        if spike < r_max:
            segs.append((spike, r_max))
        total = 0.0
        for (lo, hi) in segs:
            rs = lo + 0.5 * (hi - lo) * (_G16_X + 1.0)
            rw = 0.5 * (hi - lo) * _G16_W
            for r, wt in zip(rs, rw):
                pts = np.column_stack([xv[0] + r * ct, xv[1] + r * st])
                d2a = np.sum((pts - shifted) ** 2, axis=1)
                k1 = heat_kernel_radial(h, d2a)
                k2 = float(heat_kernel_radial(h, r * r))
                if k2 == 0.0:
                    continue
                vals = np.array([f(p, s + h) for p in pts])
                total += wt * r * float(np.mean(k1 * vals)) * k2 * 2.0 * math.pi
        return total

    span = T - s
    b = eps * eps * float(yv @ yv) / 4.0
    nodes, wts = _log_gauss_nodes(max(b / 50.0, span * 1e-12), span,
                                  per_decade=2.5)
    return lam_eps * float(sum(w * inner(float(h)) for h, w in zip(nodes, wts)))


def expansion_residual(ctx: OperatorContext, eps: float, f: TestFunction, y,
                       x, s: float) -> float:
    """Residual R of the pair-transform expansion

    L1_ring = f + (1/log eps^-1)(log[4(T-s)]/2 + lam - gamma_EM/2 - log|y|) f
              + (2 pi / log eps^-1) DIFF + R;

    |R| shrinks like 1/log^2(eps^-1) plus an exponentially small tail term.
    """
    yv = np.asarray(y, dtype=float)
    if float(yv @ yv) == 0.0:
        raise DomainError("expansion_residual requires y != 0")
    T = ctx.T
    if not (0.0 < s < T):
        raise DomainError(f"requires 0 < s < T, got s={s}")
    xv = np.asarray(x, dtype=float)
    L = math.log(1.0 / eps)
    f0 = f(xv, s)
    lead = f0 + (math.log(4.0 * (T - s)) / 2.0 + ctx.lam
                 - EULER_MASCHERONI / 2.0
                 - math.log(float(np.linalg.norm(yv)))) * f0 / L
    lead += 2.0 * math.pi / L * diff_integral(ctx, f, xv, s)
    return L1_ring(ctx, eps, f, yv, xv, s) - lead


def L3_0(ctx: OperatorContext, x0_data: dbg.InitialData, f: TestFunction, y,
         s: float, n_t: int = 24) -> float:
    """int_s^T int f(x, t) P_t X0(x) P_(t-s)(x, y) dx dt: heat smoothing of
    the product f(., t) P_t X0 at y, scale t - s."""
    T = ctx.T
    if not (0.0 <= s < T):
        raise DomainError(f"requires 0 <= s < T, got s={s}")
    yv = np.asarray(y, dtype=float)
    xs, ws = leggauss(n_t)
    h = 0.5 * (T - s)
    ts = s + h * (xs + 1.0)
    total = 0.0
    for t, w in zip(ts, h * ws):
        a = t - s
        r = math.sqrt(a)
        pts = yv[None, :] - r * np.column_stack([_GH_X, _GH_Y])
        vals = x0_data.heat(pts, t) * np.array([f(p, t) for p in pts])
        total += w * float(np.dot(_GH_W, vals))
    return total


def L4_0(ctx: OperatorContext, f: TestFunction, y, yp, s: float, sp: float,
         n_t: int = 24) -> float:
    """int_(s')^T int f(x,t) P_(t-s')(x, y') P_(t-s)(x, y) dx dt for s <= s',
    collapsed by the two-Gaussian product rule."""
    T = ctx.T
    if not (0.0 <= s <= sp < T):
        raise DomainError(f"requires 0 <= s <= s' < T, got s={s}, s'={sp}")
    yv = np.asarray(y, dtype=float)
    ypv = np.asarray(yp, dtype=float)
    d2 = float((yv - ypv) @ (yv - ypv))
    xs, ws = leggauss(n_t)
    h = 0.5 * (T - sp)
    ts = sp + h * (xs + 1.0)
    total = 0.0
    for t, w in zip(ts, h * ws):
        a = t - sp
        b = t - s
        envelope = float(heat_kernel_radial(a + b, d2))
        if envelope == 0.0:
            continue
        c = a * b / (a + b) if a + b > 0 else 0.0
        mu = (b * ypv + a * yv) / (a + b)
        total += w * envelope * f.heat_smoothed(mu, c, t)
    return total


class SolvedQV(TestFunction):
    """f(x, s) = m_(P_(S-T) g)(x, T - s): the solution of the operator
    problem L f = [P_(T-s) P_(S-T) g]^2."""

    def __init__(self, kernel: dbg.SBetaKernel, data: dbg.InitialData,
                 S: float, T: float):
        if not (0.0 < T <= S):
            raise DomainError(f"requires 0 < T <= S, got T={T}, S={S}")
        self.kernel = kernel
        self.T = T
        self.data = data if S == T else data.heated(S - T)
        self.decay_order = data.decay_order

    def __call__(self, x, s: float) -> float:
        t = self.T - s
        if t <= 0:
            return 0.0
        return dbg.m_g(self.kernel, self.data, x, t)

    def heat_smoothed(self, x, a: float, s: float) -> float:
        t = self.T - s
        if t <= 0:
            return 0.0
        return dbg.m_g_heat_smoothed(self.kernel, self.data, x, t, a)

    def rhs(self, x, s: float) -> float:
        """Target value [P_(T-s) P_(S-T) g(x)]^2."""
        xv = np.asarray(x, dtype=float)
        return float(self.data.heat(xv[None, :], self.T - s)[0] ** 2)


def solve_qv(kernel: dbg.SBetaKernel, g: dbg.InitialData, S: float,
             T: float) -> SolvedQV:
    """Solution of L f(x,s,T) = [P_(T-s) P_(S-T) g(x)]^2 as a TestFunction."""
    return SolvedQV(kernel, g, S, T)


def spdelta(ctx_or_phi, eta: float, psi: Optional[Callable], T: float,
            x0=(0.0, 0.0), n_t: int = 0) -> float:
    """Space-time approximate identity
    (2 pi / log(1/eta)) int_0^T int [P_t Phi_eta(y)]^2 Psi(x0 - y, t) dy dt.

    Phi enters through its self-correlation (a PhiKernel); psi = None means
    Psi == 1, for which the y and t integrals reduce exactly to the radial
    integral of E1 against the pair-distance density.  For general Psi the
    pair-midpoint dependence is truncated at O(eta^2 |Hess Psi|), far under
    trend tolerances.
    """
    phi = ctx_or_phi.phi if isinstance(ctx_or_phi, OperatorContext) else ctx_or_phi
    if not (0.0 < eta < 0.5):
        raise DomainError(f"spdelta requires 0 < eta < 1/2, got {eta}")
    if T <= 0:
        raise DomainError(f"spdelta requires T > 0, got {T}")
    x0v = np.asarray(x0, dtype=float)
    pref = 2.0 * math.pi / math.log(1.0 / eta)

    if psi is None:
        # exact: int phi(u) E1(eta^2 |u|^2 / 4T) du / (4 pi)
        def f(r):
            e1 = np.array([exp_integral_e1(max(eta * eta * rr * rr / (4.0 * T),
                                               1e-300)) for rr in np.atleast_1d(r)])
            return phi.radial_pdf(r) * e1 / (4.0 * math.pi)

        val = quad_1d(f, 1e-300, phi.support_radius,
                      QuadSpec(1e-12, 1e-10, 30), singular_left="log")
        return pref * val

    # general Psi: t-quadrature of H(t) int phi(u) P_2t(eta u) du with
    # H(t) = E[Psi(x0 - G, t)], G ~ N(0, (t/2) I); the pair factor integrand
    # is smooth and bounded, one Gauss panel suffices
    _pf_r, _pf_w = _gauss_on(0.0, phi.support_radius, *leggauss(64))
    _pf_pdf = phi.radial_pdf(_pf_r)

    def pair_factor(t: float) -> float:
        return float(np.dot(_pf_w * _pf_pdf,
                            heat_kernel_radial(2.0 * t, (eta * _pf_r) ** 2)))

    def H(t: float) -> float:
        r = math.sqrt(t / 2.0)
        total = 0.0
        for zx, zy, w in zip(_GH_X, _GH_Y, _GH_W):
            total += w * psi(x0v - r * np.array([zx, zy]), t)
        return total

    lo = eta * eta * 1e-10
    nodes, wts = _log_gauss_nodes(lo, T, per_decade=2.5)
    return pref * float(sum(w * H(float(t)) * pair_factor(float(t))
                            for t, w in zip(nodes, wts)))
