"""Acceptance suite: one test per criterion, each printing its pass/fail line.

A8's final-gap clause is known-unattainable at the pinned configuration (the
deterministic renewal solution of the finite-eps Laplace transform puts the
true gap at 18.7% against the stated 15%); it is implemented as stated and
left red deliberately.  The estimator itself is validated against the exact
solver in test_duality_mc.
"""

import pytest

from critshe import acceptance as acc


def _run(name):
    res = acc.run_criterion(name)
    assert res.passed, res.line()


def test_a1_laplace_identity():
    _run("A1")


def test_a2_heat_expansion():
    _run("A2")


def test_a3_macdonald_expansion():
    _run("A3")


def test_a4_kernel_scaling():
    _run("A4")


def test_a5_solvability():
    _run("A5")


def test_a6_expansion_residual():
    _run("A6")


def test_a7_iterated_integrals():
    _run("A7")


@pytest.mark.slow
def test_a8_laplace_limit():
    _run("A8")


@pytest.mark.slow
def test_a9_duality_crosscheck():
    _run("A9")


@pytest.mark.slow
def test_a10_second_moment_limit():
    _run("A10")


@pytest.mark.slow
def test_a11_decomposition():
    _run("A11")


def test_a12_space_time_delta():
    _run("A12")
