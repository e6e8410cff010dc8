"""Acceptance suite: every criterion implemented at its stated tolerance.

Each criterion function returns a CriterionResult and prints one pass/fail
line; run_suite() groups them.  Calibrated-and-frozen constants are marked
where they appear; nothing here is tuned at run time.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .numcore import EULER_MASCHERONI, Estimate, rng_stream
from . import heatkernel as hk
from . import mollifier as mo
from . import dbg
from . import operators as op
from . import she_sim as sim
from . import duality_mc as du

__all__ = ["CriterionResult", "CRITERIA", "SUITES", "run_criterion", "run_suite"]


@dataclass
class CriterionResult:
    name: str
    passed: bool
    residual: float     # worst measured residual, in the criterion's metric
    tolerance: float
    details: str
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.name}: residual={self.residual:.4g} "
                f"tol={self.tolerance:.4g} ({self.seconds:.1f}s) {self.details}")


def _gauss_pts(rng, n, scale):
    return rng.normal(size=(n, 2)) * scale


def criterion_a1() -> CriterionResult:
    """Laplace identity of the time kernel: rel <= 1e-4 on four (beta, q)."""
    t0 = time.time()
    worst = 0.0
    for beta, q in [(1.0, math.e), (1.0, math.e ** 2), (0.5, 10.0), (2.0, 100.0)]:
        k = dbg.SBetaKernel.build(beta)
        target = 4.0 * math.pi / math.log(q / beta)
        worst = max(worst, abs(dbg.s_beta_laplace(k, q) - target) / target)
    return CriterionResult("A1 laplace-identity", worst <= 1e-4, worst, 1e-4,
                           "4 (beta,q) pairs", time.time() - t0)


def criterion_a2() -> CriterionResult:
    """Heat-kernel expansion identity, abs 1e-10 on 100 random (T, y);
    remainder nonnegative and within the explicit 1/4pi bounds."""
    t0 = time.time()
    rng = rng_stream(2026, 2)
    worst = 0.0
    bounds_ok = True
    for _ in range(100):
        T = float(np.exp(rng.uniform(-3, 3)))
        y = rng.normal(size=2) * 2.0
        if np.linalg.norm(y) < 1e-4:
            y = np.array([0.3, 0.1])
        worst = max(worst, abs(hk.expansion_identity_gap(T, y)))
        a = 4.0 * T / float(y @ y)
        ev = hk.expansion_remainder(a).value
        cap = (1.0 / a if a >= 1.0 else 1.0 - math.log(min(a, 1.0))) / (4 * math.pi)
        bounds_ok = bounds_ok and (-1e-14 <= ev <= cap + 1e-14)
    for a in np.geomspace(1e-4, 1e4, 200):
        ev = hk.expansion_remainder(float(a)).value
        cap = (1.0 / a if a >= 1.0 else 1.0 - math.log(min(a, 1.0))) / (4 * math.pi)
        bounds_ok = bounds_ok and (-1e-14 <= ev <= cap + 1e-14)
    passed = worst <= 1e-10 and bounds_ok
    return CriterionResult("A2 heat-expansion", passed, worst, 1e-10,
                           f"bounds_ok={bounds_ok}", time.time() - t0)


def criterion_a3() -> CriterionResult:
    """Macdonald-type expansion: gaps at eps = 2^-k, k=4..10, strictly
    decreasing, final < 0.02."""
    t0 = time.time()
    gaps = []
    for k in range(4, 11):
        lhs, rhs = hk.macdonald_expansion_check(1.0, (1.0, 0.0), 2.0 ** -k)
        gaps.append(abs(lhs - rhs))
    dec = all(b < a for a, b in zip(gaps[:-1], gaps[1:]))
    passed = dec and gaps[-1] < 0.02
    return CriterionResult("A3 macdonald-expansion", passed, gaps[-1], 0.02,
                           f"decreasing={dec}", time.time() - t0)


#: small-tau bound constants, calibrated once on a fine grid and frozen
#: (measured suprema of s_beta(tau) tau log^2 tau on [1e-6, 3/8]:
#: 36.08 for the reference beta(lam=0), 13.69 for beta=1)
_A4_FROZEN_C = {"reference": 40.0, "unit": 15.0}


def criterion_a4() -> CriterionResult:
    """Time-kernel scaling rel 1e-8 on 100 random points; small-tau bound
    with frozen constants."""
    t0 = time.time()
    phi = mo.cached_phi("bump")
    beta = mo.beta_of(phi, 0.0)
    kb = dbg.SBetaKernel.build(beta)
    k1 = dbg.SBetaKernel.build(1.0)
    rng = rng_stream(2026, 4)
    worst = 0.0
    for _ in range(100):
        tau = float(np.exp(rng.uniform(math.log(1e-6), math.log(3.0))))
        a = dbg.s_beta(kb, tau)
        b = beta * dbg.s_beta(k1, beta * tau)
        worst = max(worst, abs(a - b) / a)
    taus = np.geomspace(1e-6, 0.375, 200)
    sup_ref = max(dbg.s_beta(kb, float(t)) * t * math.log(t) ** 2 for t in taus)
    sup_one = max(dbg.s_beta(k1, float(t)) * t * math.log(t) ** 2 for t in taus)
    bound_ok = sup_ref <= _A4_FROZEN_C["reference"] and sup_one <= _A4_FROZEN_C["unit"]
    passed = worst <= 1e-8 and bound_ok
    return CriterionResult("A4 kernel-scaling", passed, worst, 1e-8,
                           f"sup_ref={sup_ref:.2f}<=40, sup_1={sup_one:.2f}<=15",
                           time.time() - t0)


def criterion_a5() -> CriterionResult:
    """Solvability identity at 10 sampled (x, s), S = T = 0.5, rel 1e-2."""
    t0 = time.time()
    phi = mo.cached_phi("bump")
    lam = 0.5
    ctx = op.OperatorContext(T=0.5, lam=lam, phi=phi)
    beta = mo.beta_of(phi, lam)
    k = dbg.SBetaKernel.build(beta)
    g = dbg.GaussianInitialData(amp=1.0, sigma2=1.0)
    f = op.solve_qv(k, g, 0.5, 0.5)
    rng = rng_stream(2026, 5)
    worst = 0.0
    for _ in range(10):
        x = rng.normal(size=2) * 0.8
        s = rng.uniform(0.02, 0.45)
        lhs = op.L_op(ctx, f, x, s)
        rhs = f.rhs(x, s)
        worst = max(worst, abs(lhs - rhs) / max(abs(rhs), 1e-6))
    return CriterionResult("A5 solvability", worst <= 1e-2, worst, 1e-2,
                           "10 random (x,s)", time.time() - t0)


#: frozen cap for |R| log^2(1/eps) along the A6 sequence (measured <= 0.61
#: over the five samples at lam = 0.5; the lam-term limit is the asymptote)
_A6_FROZEN_CAP = 2.0

_A6_SAMPLES = [
    ((0.5, 0.2), (0.2, -0.1), 0.10),
    ((0.3, -0.4), (-0.4, 0.3), 0.15),
    ((-0.6, 0.1), (0.5, 0.5), 0.20),
    ((0.25, 0.25), (0.0, 0.0), 0.25),
    ((-0.3, -0.35), (-0.2, 0.4), 0.30),
]


def criterion_a6() -> CriterionResult:
    """Pair-transform expansion residual: |R| log^2(1/eps) bounded along
    eps in {e-4, e-6, e-8}; regression slope of log|R| vs log log(1/eps)
    <= -1.7 at each of 5 samples."""
    t0 = time.time()
    phi = mo.cached_phi("bump")
    ctx = op.OperatorContext(T=0.5, lam=0.5, phi=phi)
    f = op.GaussianTestFunction(1.0, 1.0)
    ks = [4.0, 6.0, 8.0]
    worst_slope = -math.inf
    worst_cap = 0.0
    for (y, x, s) in _A6_SAMPLES:
        Rs = [abs(op.expansion_residual(ctx, math.exp(-L), f, y, x, s))
              for L in ks]
        capped = [R * L * L for R, L in zip(Rs, ks)]
        worst_cap = max(worst_cap, max(capped))
        slope = float(np.polyfit(np.log(ks), np.log(Rs), 1)[0])
        worst_slope = max(worst_slope, slope)
    passed = worst_cap <= _A6_FROZEN_CAP and worst_slope <= -1.7
    return CriterionResult("A6 expansion-residual", passed, worst_slope, -1.7,
                           f"max |R|log^2={worst_cap:.3f}<= {_A6_FROZEN_CAP}",
                           time.time() - t0)


def criterion_a7() -> CriterionResult:
    """Iterated-integral bounds value(k, s0, 1) <= pi^k s0^(-1/2); k=2
    growth ratio to log^2(1/s0) within [0.05, 20]."""
    t0 = time.time()
    s0s = [1e-2, 1e-3, 1e-4]
    ok = True
    worst = 0.0
    for k in (1, 2, 3):
        for s0 in s0s:
            v = du.iterated_integral(k, s0, 1.0)
            cap = math.pi ** k / math.sqrt(s0)
            ok = ok and v <= cap
            worst = max(worst, v / cap)
    ratios = [du.iterated_integral(2, s0, 1.0) / math.log(1.0 / s0) ** 2
              for s0 in s0s]
    ok = ok and all(0.05 <= r <= 20.0 for r in ratios)
    return CriterionResult("A7 iterated-integrals", ok, worst, 1.0,
                           f"k2/log^2 ratios={[f'{r:.3f}' for r in ratios]}",
                           time.time() - t0)


def criterion_a8(n_paths: int = 100_000) -> CriterionResult:
    """Laplace-transform limit: |S_eps - 2pi| decreasing across
    eps in {e-3, e-4, e-5} at q = e^2 beta (lam = 0), final within 15%.

    Note: the deterministic renewal solution puts the true final gap at
    18.7% (gap = 0.94/log(1/eps)); the estimator is validated against it,
    so a failure here is the tolerance, not the estimator.
    """
    t0 = time.time()
    phi = mo.cached_phi("bump")
    beta = mo.beta_of(phi, 0.0)
    q = math.e ** 2 * beta
    target = 2.0 * math.pi
    gaps, details = [], []
    for eE in (3, 4, 5):
        eps = math.exp(-eE)
        params = mo.critical_params(phi, eps, 0.0)
        cfg = du.PathConfig(n_paths=n_paths, substep=eps * eps / 10.0,
                            horizon=12.0 / q, params=params, phi=phi, seed=88)
        est = du.S_eps(q, cfg)
        gaps.append(abs(est.mean - target))
        details.append(f"e-{eE}:{est.mean:.3f}+-{est.std_err:.3f}")
    dec = all(b < a for a, b in zip(gaps[:-1], gaps[1:]))
    final_rel = gaps[-1] / target
    passed = dec and final_rel <= 0.15
    return CriterionResult("A8 laplace-limit", passed, final_rel, 0.15,
                           f"decreasing={dec} " + " ".join(details),
                           time.time() - t0)


def _a9_config(phi, n_replicas: int) -> sim.SimConfig:
    params = mo.critical_params(phi, 0.1, 0.0)
    return sim.SimConfig(
        box_size=4.0, grid_n=256, dt=5e-4, T=0.25, params=params,
        mollifier=mo.reference_mollifier(), phi=phi,
        x0=dbg.constant_initial(1.0), n_replicas=n_replicas, seed=1234,
        record_times=(0.25,))


def criterion_a9(n_replicas: int = 200, n_paths: int = 200_000) -> CriterionResult:
    """Duality cross-check: lattice second moment vs Feynman-Kac pair moment
    at (eps=0.1, lam=0, t=0.25); 4 combined stderr + 10% systematic."""
    t0 = time.time()
    phi = mo.cached_phi("bump")
    cfg = _a9_config(phi, n_replicas)
    reps = sim.simulate(cfg)
    finals = [rep[-1] for rep in reps]
    lattice = sim.moment2_estimator(finals, cfg, (0, 0))
    pcfg = du.PathConfig(n_paths=n_paths, substep=1e-3, horizon=0.3,
                         params=cfg.params, phi=phi, seed=777)
    req = du.MomentRequest(2, ((0.0, 0.0), (0.0, 0.0)), 0.25,
                           dbg.constant_initial(1.0))
    dual = du.n_point_moment(req, pcfg)
    gap = abs(lattice.mean - dual.mean)
    allowance = 4.0 * math.hypot(lattice.std_err, dual.std_err) \
        + 0.10 * max(abs(lattice.mean), abs(dual.mean))
    passed = gap <= allowance
    return CriterionResult(
        "A9 duality-crosscheck", passed, gap, allowance,
        f"lattice={lattice.mean:.4f}+-{lattice.std_err:.4f} "
        f"dual={dual.mean:.4f}+-{dual.std_err:.4f}", time.time() - t0)


def criterion_a10(n_paths: int = 100_000) -> CriterionResult:
    """Second-moment limit: pair functional at eps in {e-3, e-4, e-5}
    approaches m_g monotonically in gap at 3 points; final gap < 20%."""
    t0 = time.time()
    phi = mo.cached_phi("bump")
    lam = 0.0
    beta = mo.beta_of(phi, lam)
    k = dbg.SBetaKernel.build(beta)
    g = dbg.GaussianInitialData(amp=1.0, sigma2=1.0)
    t = 0.4
    points = [(0.0, 0.0), (0.5, 0.0), (1.0, 0.0)]
    targets = [dbg.m_g(k, g, x, t) for x in points]
    gaps = {i: [] for i in range(len(points))}
    details = []
    for eE in (3, 4, 5):
        eps = math.exp(-eE)
        params = mo.critical_params(phi, eps, lam)
        cfg = du.PathConfig(n_paths=n_paths, substep=eps * eps / 10.0,
                            horizon=t, params=params, phi=phi, seed=99)
        ests = du.pair_functional_batch(points, t, cfg, g)
        for i, est in enumerate(ests):
            gaps[i].append(abs(est.mean - targets[i]))
        details.append(f"e-{eE}:" + ",".join(f"{e.mean:.2f}" for e in ests))
    mono = all(all(b < a for a, b in zip(gs[:-1], gs[1:]))
               for gs in gaps.values())
    final_rel = max(gaps[i][-1] / abs(targets[i]) for i in range(len(points)))
    passed = mono and final_rel < 0.20
    return CriterionResult(
        "A10 second-moment-limit", passed, final_rel, 0.20,
        f"monotone={mono} targets={[f'{v:.2f}' for v in targets]} "
        + " ".join(details), time.time() - t0)


def criterion_a11(n_replicas: int = 100) -> CriterionResult:
    """Decomposition identity in expectation at eps=0.1, T=0.25:
    E[I1+I2-2I3-2I4] = int int f (P_t X0)^2 within 4 stderr + 10%;
    E[I3], E[I4] within 4 stderr of 0."""
    t0 = time.time()
    phi = mo.cached_phi("bump")
    params = mo.critical_params(phi, 0.1, 0.0)
    cfg = sim.SimConfig(
        box_size=4.0, grid_n=256, dt=5e-4, T=0.25, params=params,
        mollifier=mo.reference_mollifier(), phi=phi,
        x0=dbg.constant_initial(1.0), n_replicas=n_replicas, seed=4321)
    f = sim.GridTestFunction(amp=1.0, sigma2=0.5)
    rep = sim.decomposition_report(cfg, f)
    z3 = abs(rep.I3.mean) / max(rep.I3.std_err, 1e-300)
    z4 = abs(rep.I4.mean) / max(rep.I4.std_err, 1e-300)
    gap = abs(rep.combo.mean - rep.lhs_deterministic)
    allowance = 4.0 * rep.combo.std_err + 0.10 * abs(rep.lhs_deterministic)
    passed = gap <= allowance and z3 <= 4.0 and z4 <= 4.0
    return CriterionResult(
        "A11 decomposition", passed, gap, allowance,
        f"combo={rep.combo.mean:.4f}+-{rep.combo.std_err:.4f} "
        f"lhs={rep.lhs_deterministic:.4f} z3={z3:.2f} z4={z4:.2f} "
        f"I1={rep.I1.mean:.3f} I2={rep.I2.mean:.4f}", time.time() - t0)


def criterion_a12() -> CriterionResult:
    """Space-time delta with Psi == 1: values at eta in {1e-2, 1e-4, 1e-6}
    monotonically approach 1; final gap < 0.05."""
    t0 = time.time()
    phi = mo.cached_phi("bump")
    T = 0.25
    gaps = []
    for eta in (1e-2, 1e-4, 1e-6):
        v = op.spdelta(phi, eta, None, T)
        gaps.append(abs(v - 1.0))
    dec = all(b < a for a, b in zip(gaps[:-1], gaps[1:]))
    passed = dec and gaps[-1] < 0.05
    return CriterionResult("A12 space-time-delta", passed, gaps[-1], 0.05,
                           f"gaps={[f'{g:.4f}' for g in gaps]}", time.time() - t0)


CRITERIA: dict[str, Callable[[], CriterionResult]] = {
    "A1": criterion_a1, "A2": criterion_a2, "A3": criterion_a3,
    "A4": criterion_a4, "A5": criterion_a5, "A6": criterion_a6,
    "A7": criterion_a7, "A8": criterion_a8, "A9": criterion_a9,
    "A10": criterion_a10, "A11": criterion_a11, "A12": criterion_a12,
}

SUITES = {
    "analytic": ["A1", "A2", "A3", "A4", "A5", "A6", "A7", "A12"],
    "operators": ["A5", "A6", "A12"],
    "duality": ["A9"],
    "mc": ["A8", "A10", "A11"],
    "all": list(CRITERIA.keys()),
}


def run_criterion(name: str) -> CriterionResult:
    res = CRITERIA[name]()
    print(res.line(), flush=True)
    return res


def run_suite(suite: str) -> list[CriterionResult]:
    if suite not in SUITES:
        raise KeyError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    return [run_criterion(name) for name in SUITES[suite]]
