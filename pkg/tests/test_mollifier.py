import math

import numpy as np
import pytest

from critshe import mollifier as mo
from critshe import numcore as nc


@pytest.fixture(scope="module")
def bump():
    return mo.cached_phi("bump")


def test_reference_normalization(bump):
    spec = bump.spec
    spec.validate()
    # phi(0) = int rho^2 = 16/(7 pi) for the cubic bump
    assert abs(bump.phi((0.0, 0.0)) - 16.0 / (7.0 * math.pi)) < 1e-12
    assert abs(bump.mass() - 1.0) < 1e-6


def test_uniform_disk_lens_closed_form():
    k = mo.build_phi(mo.uniform_disk_mollifier())
    assert abs(k.phi((0.0, 0.0)) - 1.0 / math.pi) < 1e-10
    # the kinked (discontinuous-rho) correlation tabulates to ~3e-8
    for d in (0.3, 0.7, 1.4, 1.9):
        lens = 2.0 * math.acos(d / 2.0) - (d / 2.0) * math.sqrt(4.0 - d * d)
        assert abs(k.phi((d, 0.0)) - lens / math.pi ** 2) < 1e-7


def test_phi_even_and_supported(bump):
    rng = nc.rng_stream(11, 0)
    for _ in range(1000):
        y = rng.normal(size=2) * 1.2
        assert abs(bump.phi(y) - bump.phi(-y)) < 1e-9
    for r in (2.0001, 2.5, 10.0):
        assert bump.phi((r, 0.0)) == 0.0


def test_phi_eps_examples(bump):
    y = np.array([0.3, -0.1])
    assert abs(mo.phi_eps(bump, 1.0, y) - bump.phi(y)) < 1e-15
    assert abs(mo.phi_eps(bump, 0.25, (0, 0)) - bump.phi((0, 0)) / 0.25 ** 2) < 1e-10
    with pytest.raises(nc.DomainError):
        mo.phi_eps(bump, 1.5, y)
    # mass conservation over eps
    for eps in (1.0, 0.5, 0.1, 0.05, 0.01):
        m = nc.quad_1d(lambda r: 2 * math.pi * r * bump.phi_radial(r / eps) / eps ** 2,
                       0.0, 2.0 * eps, nc.QuadSpec(1e-12, 1e-9))
        assert abs(m - 1.0) < 1e-6


def test_varphi_examples(bump):
    eps = 0.2
    assert abs(mo.varphi_eps(bump, eps, (0, 0)) - mo.phi_eps(bump, eps, (0, 0))) < 1e-12
    # support radius of varphi is (2M)/sqrt2
    sup = bump.support_radius / math.sqrt(2.0)
    assert mo.varphi_eps(bump, eps, (eps * sup * 1.001, 0.0)) == 0.0
    assert mo.varphi_eps(bump, eps, (eps * sup * 0.95, 0.0)) >= 0.0
    # int varphi_eps = 1/2 by the Jacobian of u = sqrt2 x
    m = nc.quad_1d(lambda r: 2 * math.pi * r * mo.varphi_radial(bump, eps, r),
                   0.0, eps * sup * 1.01, nc.QuadSpec(1e-12, 1e-9))
    assert abs(m - 0.5) < 1e-6


def test_log_moment_two_routes(bump):
    mc, se = mo.log_moment_mc_oracle(bump, n=400_000)
    # 3 significant digits at the scale of L_phi (~0.39): allow 4 stderr too
    assert abs(mc - bump.log_moment) < max(4.0 * se, 5e-3 * abs(bump.log_moment))


def test_coupling_examples():
    assert abs(mo.coupling_constant(math.exp(-1), 0.0) - 2 * math.pi) < 1e-12
    assert abs(mo.coupling_constant(math.exp(-2), 1.0) - 1.5 * math.pi) < 1e-12
    with pytest.raises(nc.DomainError):
        mo.coupling_constant(1.0, 0.0)
    # eps -> 0: coupling -> 0 with coupling * log(1/eps) -> 2 pi
    prev = math.inf
    for eps in (1e-4, 1e-8, 1e-16):
        lam_eps = mo.coupling_constant(eps, 3.0)
        assert lam_eps < prev
        prev = lam_eps
        assert abs(lam_eps * math.log(1 / eps) - 2 * math.pi) <= 2 * math.pi * 3.0 / math.log(1 / eps) + 1e-12


def test_coupling_monotone_positive():
    lam = 0.5
    eps_grid = np.geomspace(1e-6, mo.eps_bar(lam) * 0.999, 60)
    vals = [mo.coupling_constant(float(e), lam) for e in eps_grid]
    assert all(v > 0 for v in vals)
    assert all(b > a for a, b in zip(vals[:-1], vals[1:]))  # decreasing in log(1/eps) = increasing in eps
    # lam < 0: positivity inside (0, e^lam)
    lam = -0.7
    for e in np.geomspace(1e-6, mo.eps_bar(lam) * 0.999, 20):
        assert mo.coupling_constant(float(e), lam) > 0


def test_beta_examples(bump):
    # lam chosen so the exponent vanishes -> beta = 1
    lam0 = bump.log_moment - math.log(2.0) + nc.EULER_MASCHERONI
    assert abs(mo.beta_of(bump, lam0) - 1.0) < 1e-12
    # lam -> lam + d multiplies beta by e^(2d)
    b1 = mo.beta_of(bump, 0.3)
    b2 = mo.beta_of(bump, 0.3 + 0.25)
    assert abs(b2 / b1 - math.exp(0.5)) < 1e-12


def test_critical_params_gate(bump):
    p = mo.critical_params(bump, 0.1, 0.0)
    assert p.coupling > 0 and p.beta > 0
    with pytest.raises(nc.DomainError):
        mo.critical_params(bump, 0.9, -1.0)  # eps >= e^lam


def test_custom_profile_roundtrip():
    rs = np.linspace(0.0, 1.0, 300)
    vals = 4.0 / math.pi * (1 - rs ** 2) ** 3
    spec = mo.mollifier_from_profile(rs, vals, name="bump-tab")
    k = mo.build_phi(spec)
    ref = mo.cached_phi("bump")
    assert abs(k.phi((0.5, 0.0)) - ref.phi((0.5, 0.0))) < 1e-4


def test_custom_profile_rejects_unnormalized():
    rs = np.linspace(0.0, 1.0, 30)
    with pytest.raises(nc.DomainError):
        mo.mollifier_from_profile(rs, np.ones_like(rs) * 3.0)
