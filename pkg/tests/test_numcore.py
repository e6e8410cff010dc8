import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from critshe import numcore as nc


def test_quadspec_invariants():
    with pytest.raises(ValueError):
        nc.QuadSpec(abs_tol=0.0)
    with pytest.raises(ValueError):
        nc.QuadSpec(rel_tol=-1e-9)
    with pytest.raises(ValueError):
        nc.QuadSpec(max_refinement_depth=0)


def test_estimate_invariants():
    with pytest.raises(ValueError):
        nc.Estimate(0.0, -1.0, 10)
    with pytest.raises(ValueError):
        nc.Estimate(0.0, 1.0, 0)
    e = nc.Estimate(1.0, 0.1, 100)
    assert e.agrees_with(nc.Estimate(1.05, 0.1, 100))


def test_gamma_examples():
    assert nc.gamma_fn(1.0) == 1.0
    assert abs(nc.gamma_fn(0.5) - math.sqrt(math.pi)) < 1e-14
    assert nc.gamma_fn(5.0) == 24.0
    with pytest.raises(nc.DomainError):
        nc.gamma_fn(0.0)
    with pytest.raises(nc.DomainError):
        nc.gamma_fn(-1.3)


def test_gamma_recurrence():
    rng = nc.rng_stream(1, 17)
    us = np.exp(rng.uniform(math.log(0.1), math.log(50.0), 1000))
    for u in us:
        lhs = nc.gamma_fn(u + 1.0)
        rhs = u * nc.gamma_fn(u)
        assert abs(lhs - rhs) <= 1e-11 * abs(rhs)


def test_e1_value_and_domain():
    # adaptive quadrature oracle of the defining integral
    oracle = nc.quad_1d(lambda t: np.exp(-t) / t, 1.0, 60.0,
                        nc.QuadSpec(1e-14, 1e-13))
    assert abs(nc.exp_integral_e1(1.0) - oracle) < 1e-12
    assert abs(nc.exp_integral_e1(1.0) - 0.2193839343955203) < 1e-12
    with pytest.raises(nc.DomainError):
        nc.exp_integral_e1(0.0)


def test_e1_asymptotics_and_limit():
    # large x: E1(x) ~ e^-x / x (as a ratio bound)
    for x in (20.0, 40.0):
        ratio = nc.exp_integral_e1(x) / (math.exp(-x) / x)
        assert 0.9 < ratio < 1.0
    # x -> 0+: E1(x) + log x -> -gamma_EM
    for x in (1e-6, 1e-8):
        assert abs(nc.exp_integral_e1(x) + math.log(x)
                   + nc.EULER_MASCHERONI) < 1e-5


def test_e1_derivative_finite_difference():
    for x in np.geomspace(0.1, 10.0, 12):
        h = 1e-6 * x
        fd = (nc.exp_integral_e1(x + h) - nc.exp_integral_e1(x - h)) / (2 * h)
        exact = -math.exp(-x) / x
        assert abs(fd - exact) <= 1e-6 * abs(exact)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=11))
def test_quad_polynomials_exact(coeffs):
    p = np.polynomial.Polynomial(coeffs)
    val = nc.quad_1d(lambda t: p(t), 0.0, 1.0, nc.QuadSpec(1e-13, 1e-13))
    exact = float(p.integ()(1.0) - p.integ()(0.0))
    assert abs(val - exact) <= 1e-12


def test_quad_examples():
    assert abs(nc.quad_1d(lambda t: np.ones_like(t), 0, 1) - 1.0) < 1e-12
    v = nc.quad_1d(lambda t: t ** -0.5, 0, 1, singular_left="power", power=0.5)
    assert abs(v - 2.0) < 1e-10
    a = 0.25
    v = nc.quad_1d(lambda s: 1.0 / (np.sqrt(s) * (s + a)), 0, 1,
                   singular_left="power", power=0.5)
    assert abs(v - 4.0 * math.atan(2.0)) < 1e-10


def test_quad_log_singularity():
    v = nc.quad_1d(lambda t: np.log(t), 1e-300, 1.0, singular_left="log")
    assert abs(v + 1.0) < 1e-10


def test_quad_refinement_exhausted_carries_estimate():
    spec = nc.QuadSpec(1e-15, 1e-15, max_refinement_depth=2)
    with pytest.raises(nc.RefinementExhausted) as ei:
        nc.quad_1d(lambda t: np.abs(np.sin(200.0 * t)) ** 0.3, 0.0, 1.0, spec)
    assert math.isfinite(ei.value.best_estimate)
    assert ei.value.error_estimate > 0


def test_quad_2d_and_disk():
    v = nc.quad_2d(lambda x, y: np.exp(-(x * x + y * y) / 2) / (2 * math.pi),
                   (-8, 8), (-8, 8), nc.QuadSpec(1e-10, 1e-9))
    assert abs(v - 1.0) < 1e-8
    assert abs(nc.quad_disk(lambda x, y: np.ones_like(x), 1.0) - math.pi) < 1e-9
    # gaussian mass over a large disk = 1 - tail
    R = 6.0
    v = nc.quad_disk(lambda x, y: np.exp(-(x * x + y * y) / 2) / (2 * math.pi), R)
    assert abs(v - (1.0 - math.exp(-R * R / 2))) < 1e-9


def test_rng_determinism_and_stats():
    a = nc.rng_stream(1, 0).standard_normal(10 ** 6)
    b = nc.rng_stream(1, 0).standard_normal(10 ** 6)
    assert np.array_equal(a, b)
    assert abs(a.mean()) < 4.0 / math.sqrt(10 ** 6)
    c = nc.rng_stream(1, 1).standard_normal(10 ** 6)
    rho = np.corrcoef(a, c)[0, 1]
    assert abs(rho) < 0.01


def test_euler_mascheroni_integral_representation():
    spec = nc.QuadSpec(1e-14, 1e-14)
    val = nc.quad_1d(lambda t: -np.exp(-t) * np.log(t), 1e-300, 1.0, spec,
                     singular_left="log")
    val += nc.quad_1d(lambda t: -np.exp(-t) * np.log(t), 1.0, 60.0, spec)
    assert abs(val - nc.EULER_MASCHERONI) < 1e-12


def test_merge_estimates():
    rng = nc.rng_stream(3, 0)
    xs = rng.standard_normal(4000)
    whole = nc.mc_estimate(xs)
    parts = [nc.mc_estimate(xs[i * 1000:(i + 1) * 1000]) for i in range(4)]
    merged = nc.merge_estimates(parts)
    assert abs(merged.mean - whole.mean) < 1e-12
    assert abs(merged.std_err - whole.std_err) < 1e-4 * whole.std_err
