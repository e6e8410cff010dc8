import math

import numpy as np
import pytest

from critshe import heatkernel as hk
from critshe import numcore as nc


def test_kernel_values():
    assert abs(hk.heat_kernel(1.0, (0, 0)) - 1.0 / (2 * math.pi)) < 1e-15
    assert abs(hk.heat_kernel(2.0, (2, 0)) - math.exp(-1) / (4 * math.pi)) < 1e-15
    with pytest.raises(nc.DomainError):
        hk.heat_kernel(0.0, (1, 0))


def test_kernel_normalization():
    v = nc.quad_disk(lambda x, y: hk.heat_kernel_radial(0.7, x * x + y * y),
                     8.0, spec=nc.QuadSpec(1e-10, 1e-9))
    assert abs(v - 1.0) < 1e-8


def test_chapman_kolmogorov():
    rng = nc.rng_stream(7, 1)
    for _ in range(50):
        s, t = np.exp(rng.uniform(-2, 0.5, 2))
        x = rng.normal(size=2)
        y = rng.normal(size=2)

        def f(zx, zy):
            d1 = (zx - x[0]) ** 2 + (zy - x[1]) ** 2
            d2 = (zx - y[0]) ** 2 + (zy - y[1]) ** 2
            return hk.heat_kernel_radial(s, d1) * hk.heat_kernel_radial(t, d2)

        mid = 0.5 * (x + y)
        R = 7.0 * math.sqrt(max(s, t)) + float(np.linalg.norm(x - y))
        val = nc.quad_disk(f, R, center=tuple(mid), spec=nc.QuadSpec(1e-11, 1e-10))
        target = hk.heat_kernel(s + t, x, y)
        assert abs(val - target) <= 1e-8 * target + 1e-13


def test_integrated_kernel_examples():
    ik = hk.integrated_kernel(1.0, (1.0, 0.0))
    ikq = hk.integrated_kernel_quadrature(1.0, (1.0, 0.0))
    assert abs(ik - ikq) <= 1e-8 * abs(ik)
    # scaling: value(T, y) = value(c^2 T, c y)
    for c in (0.3, 2.5):
        a = hk.integrated_kernel(0.7, (0.4, -0.8))
        b = hk.integrated_kernel(c * c * 0.7, (c * 0.4, -c * 0.8))
        assert abs(a - b) < 1e-14
    # T -> infinity: value - log term -> -gamma_EM / 4 pi
    y = (0.5, 0.0)
    for T in (1e4, 1e6):
        v = hk.integrated_kernel(T, y) - math.log(4 * T / 0.25) / (4 * math.pi)
        assert abs(v + nc.EULER_MASCHERONI / (4 * math.pi)) < 1e-4 / T ** 0.5
    with pytest.raises(nc.DomainError):
        hk.integrated_kernel(1.0, (0.0, 0.0))


def test_expansion_identity_100_random():
    rng = nc.rng_stream(7, 2)
    for _ in range(100):
        T = float(np.exp(rng.uniform(-3, 3)))
        y = rng.normal(size=2) * 2.0
        if np.linalg.norm(y) < 1e-4:
            continue
        assert abs(hk.expansion_identity_gap(T, y)) <= 1e-10


def test_remainder_nonnegative_and_bounded():
    for a in np.geomspace(1e-4, 1e4, 200):
        ev = hk.expansion_remainder(float(a))
        cap = (1.0 / a if a >= 1 else 1.0 - math.log(min(a, 1.0))) / (4 * math.pi)
        assert -1e-14 <= ev.value <= cap + 1e-14
    # vanishing at infinity; explicit value at a = 1
    assert hk.expansion_remainder(1e8).value < 1e-8
    target = nc.quad_1d(lambda t: -np.expm1(-t) / (4 * math.pi * t), 1e-300, 1.0,
                        nc.QuadSpec(1e-13, 1e-12), singular_left="log")
    assert abs(hk.expansion_remainder(1.0).value - target) < 1e-12
    with pytest.raises(nc.DomainError):
        hk.expansion_remainder(0.0)


def test_macdonald_two_routes_and_scaling():
    lhs, _ = hk.macdonald_expansion_check(1.0, (1.0, 0.0), 1.0 / 16)
    alt = hk.macdonald_lhs_cosh_route(1.0, (1.0, 0.0), 1.0 / 16)
    assert abs(lhs - alt) <= 1e-8 * lhs
    # q -> 4q, |x| -> |x|/2 leaves the lhs invariant
    a, _ = hk.macdonald_expansion_check(1.0, (1.0, 0.0), 0.05)
    b, _ = hk.macdonald_expansion_check(4.0, (0.5, 0.0), 0.05)
    assert abs(a - b) <= 1e-10 * a


def test_ratio_bound():
    rng = nc.rng_stream(7, 3)
    for p in (2.0, 10.0):
        samples = [(rng.normal(size=2) * 3, rng.normal(size=2) * 3)
                   for _ in range(10 ** 5 // 10)]
        assert hk.ratio_bound_check(p, samples)
    y = np.array([1.5, -2.0])
    assert hk.ratio_bound_check(2.0, [(y, y)])
    assert hk.ratio_bound_check(0.0, [(y, 2 * y)])
    with pytest.raises(nc.DomainError):
        hk.ratio_bound_check(-1.0, [])


#: frozen constant for the moment-decay panel inequality (p' = 2, p = 4),
#: calibrated once over T0 in {0.25, 1, 4}, |y| <= 12 (measured sup 4.82)
_HEAT22_FROZEN_C = 6.0


def _heat22_lhs(T0: float, y: np.ndarray, p_prime: float, p: float) -> float:
    def f(zx, zy):
        r2 = zx * zx + zy * zy
        d = np.sqrt((zx - y[0]) ** 2 + (zy - y[1]) ** 2)
        return (r2 ** (p_prime / 2.0) * hk.heat_kernel_radial(T0, r2)
                / (1.0 + d ** p))

    R = 9.0 * math.sqrt(T0)
    return nc.quad_disk(f, R, spec=nc.QuadSpec(1e-10, 1e-8))


def test_moment_decay_panel_inequality():
    p_prime, p = 2.0, 4.0
    for T0 in (0.25, 1.0, 4.0):
        cap = _HEAT22_FROZEN_C * (T0 ** (p_prime / 2) + T0 ** ((p_prime + p) / 2))
        for r in (0.0, 2.0, 5.0, 12.0):
            v = _heat22_lhs(T0, np.array([r, 0.0]), p_prime, p)
            assert v <= cap / (1.0 + r ** p)
        # monotone decay along the ray beyond the weight ring |x'| ~ sqrt(2 T0)
        ring = math.sqrt(2.0 * T0)
        vals = [_heat22_lhs(T0, np.array([ring + d, 0.0]), p_prime, p)
                for d in (1.0, 3.0, 6.0, 11.0)]
        assert all(b < a for a, b in zip(vals[:-1], vals[1:]))
