import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chemofv.errors import ConfigError, ConsistencyError, DomainError
from chemofv.motility import (
    CustomMotility,
    PowerLaw,
    SampleLadder,
    check_hypotheses,
    motility_from_dict,
    phi_derivatives,
    phi_eps_eval,
    phi_eval,
    root_second_derivative,
    verify_consistency,
)


@pytest.mark.parametrize("alpha,s,expected", [(1, 2, 2), (2, 3, 9), (0.5, 0, 0)])
def test_phi_eval_power_law(alpha, s, expected):
    assert phi_eval(PowerLaw(alpha), s) == expected


@pytest.mark.parametrize("alpha,eps,s,expected", [(1, 0.5, 1, 1.5), (2, 0.25, 0, 0.25), (1, 0.1, 2, 2.1)])
def test_phi_eps_eval(alpha, eps, s, expected):
    assert phi_eps_eval(PowerLaw(alpha), eps, s) == pytest.approx(expected, rel=1e-15)


def test_phi_eps_rejects_eps_outside_unit_interval():
    for eps in (0.0, 1.0, -0.1):
        with pytest.raises(ConfigError):
            phi_eps_eval(PowerLaw(1), eps, 1.0)


def test_negative_argument_is_a_domain_error():
    with pytest.raises(DomainError):
        phi_eval(PowerLaw(2), -1e-3)
    with pytest.raises(DomainError):
        phi_derivatives(PowerLaw(2), 0.0)


@pytest.mark.parametrize("alpha,s,expected", [(2, 3, (6, 2)), (1, 5, (1, 0))])
def test_derivatives_polynomial(alpha, s, expected):
    assert phi_derivatives(PowerLaw(alpha), s) == pytest.approx(expected, abs=1e-14)


def test_derivatives_square_root_against_mpmath():
    with mpmath.workdps(50):
        s = mpmath.mpf("0.25")
        d1 = mpmath.mpf("0.5") * s ** mpmath.mpf("-0.5")
        d2 = mpmath.mpf("-0.25") * s ** mpmath.mpf("-1.5")
    got = phi_derivatives(PowerLaw(0.5), 0.25)
    assert got[0] == pytest.approx(float(d1), rel=1e-14)
    assert got[1] == pytest.approx(float(d2), rel=1e-14)
    assert got == pytest.approx((1.0, -2.0), rel=1e-14)


@settings(max_examples=60, deadline=None)
@given(alpha=st.floats(0.1, 4.0), s=st.floats(1e-6, 1e3))
def test_power_law_matches_definition(alpha, s):
    m = PowerLaw(alpha)
    assert phi_eval(m, s) == pytest.approx(s ** alpha, rel=1e-13)
    d1, d2 = phi_derivatives(m, s)
    assert d1 == pytest.approx(alpha * s ** (alpha - 1), rel=1e-12)
    assert d2 == pytest.approx(alpha * (alpha - 1) * s ** (alpha - 2), rel=1e-12, abs=1e-300)


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(0.2, 3.0))
def test_declared_power_law_derivatives_pass_finite_differences(alpha):
    assert verify_consistency(PowerLaw(alpha)) < 1e-6


def test_custom_from_expressions_evaluates():
    m = CustomMotility.from_expressions("s*(1+s)", "1+2*s", "2", alpha=1.0)
    assert phi_eval(m, 2.0) == 6.0
    assert phi_derivatives(m, 2.0) == (5.0, 2.0)


def test_custom_ratios_tend_to_one():
    m = CustomMotility.from_expressions("s*(1+s)", "1+2*s", "2", alpha=1.0)
    rep = check_hypotheses(m, "classical", SampleLadder(1.0, 1e-8))
    assert rep.passed
    # independent arithmetic: phi(s)/s = 1 + s and phi'(s) = 1 + 2 s on the tail
    tail = SampleLadder(1.0, 1e-8).tail()
    assert rep.entry("lower_power_bound").observed == pytest.approx(min(1 + s for s in tail), rel=1e-12)
    assert rep.entry("derivative_power_bound").observed == pytest.approx(max(1 + 2 * s for s in tail), rel=1e-12)


def test_inconsistent_triple_rejected_before_checking():
    bad = CustomMotility.from_expressions("s*(1+s)", "1+s", "2", alpha=1.0)
    with pytest.raises(ConsistencyError):
        check_hypotheses(bad, "classical")
    bad2 = CustomMotility.from_expressions("s**2", "2*s", "3", alpha=2.0)
    with pytest.raises(ConsistencyError):
        verify_consistency(bad2)


def test_root_concavity_for_small_alpha():
    rep = check_hypotheses(PowerLaw(0.4, s0=1.0), "weak")
    e = rep.entry("root_concavity")
    assert e.verdict and abs(e.observed) <= 1e-10
    assert rep.entry("vanishes_at_zero").verdict


def test_weak_mode_small_alpha_needs_s0():
    with pytest.raises(ConfigError):
        check_hypotheses(PowerLaw(0.3), "weak")


def test_convex_root_fails_concavity():
    # phi = s^0.4 (1 + s)^2: phi^(1/alpha) = s (1+s)^5 is convex
    m = CustomMotility.from_expressions(
        "s**0.4*(1+s)**2",
        "0.4*s**(-0.6)*(1+s)**2 + 2*s**0.4*(1+s)",
        "-0.24*s**(-1.6)*(1+s)**2 + 1.6*s**(-0.6)*(1+s) + 2*s**0.4",
        alpha=0.4, s0=1.0, domain=(0.0, math.inf))
    rep = check_hypotheses(m, "weak")
    assert not rep.entry("root_concavity").verdict
    assert not rep.passed


def test_positive_at_zero_fails_weak_vanishing():
    m = CustomMotility.from_expressions("1+s", "1", "0", alpha=1.0)
    rep = check_hypotheses(m, "weak")
    assert not rep.entry("vanishes_at_zero").verdict


def test_ladder_must_reach_small_s():
    with pytest.raises(ConfigError):
        check_hypotheses(PowerLaw(1.0), "classical", SampleLadder(1.0, 1e-4))


def test_report_reproducible_from_samples():
    rep = check_hypotheses(PowerLaw(1.5), "classical")
    e = rep.entry("lower_power_bound")
    assert min(PowerLaw(1.5).phi(s) / s ** 1.5 for s in e.samples) == pytest.approx(e.observed, rel=1e-12)
    d = rep.to_dict()
    assert d["passed"] and {x["id"] for x in d["entries"]} >= {"positivity", "lower_power_bound"}


def test_root_second_derivative_chain_rule():
    # phi = s^2, alpha = 1: (phi)'' = 2
    assert root_second_derivative(1.0, 4.0, 4.0, 2.0) == pytest.approx(2.0)
    # phi = s^2, alpha = 2: sqrt(phi) = s is linear
    s = 0.7
    assert root_second_derivative(2.0, s * s, 2 * s, 2.0) == pytest.approx(0.0, abs=1e-15)


def test_motility_from_dict():
    assert isinstance(motility_from_dict({"family": "power", "alpha": 2}), PowerLaw)
    with pytest.raises(ConfigError):
        motility_from_dict({"family": "exp"})
    m = motility_from_dict({"family": "custom", "phi": "s", "dphi": "1", "d2phi": "0", "alpha": 1})
    assert np.isclose(m.phi(3.0), 3.0)
