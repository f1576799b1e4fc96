import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from chemofv.analysis import (
    Problem,
    b_threshold,
    classify_regime,
    default_lambda_phi,
    eps_convergence_study,
    eventual_delta,
    kappa1,
    kappa2,
    mms_convergence,
    ode_comparison_bound,
    test_function_family as family,
    weak_residual,
)
from chemofv.analysis.constants import kappa1 as _k1, kappa2 as _k2
from chemofv.analysis.weak import TestFunction
from chemofv.dynamics import PhysParams, SolverConfig, run
from chemofv.errors import ConfigError, DomainError, SamplingError
from chemofv.grid import Field, Grid
from chemofv.motility import PowerLaw

mpmath.mp.dps = 50


def k1_ref(p, n):
    p, rn = mpmath.mpf(p), mpmath.sqrt(n)
    return (p - 1) ** ((p + 1) / p) * (2 * p + rn) ** (2 / p) * (2 * p - 1) ** (-1 / p)


def k2_ref(p, n):
    p, rn = mpmath.mpf(p), mpmath.sqrt(n)
    return 2 ** (3 * p + 2) * (2 * p + rn + 1) ** (2 * p) * (2 * p - 2 + rn) ** (p + 1) / (2 * p - 1) ** p


@pytest.mark.parametrize("p", [1.5, 2, 3, 5])
@pytest.mark.parametrize("n", range(1, 7))
def test_kappas_match_high_precision(p, n):
    assert kappa1(p, n) == pytest.approx(float(k1_ref(p, n)), rel=1e-12)
    assert kappa2(p, n) == pytest.approx(float(k2_ref(p, n)), rel=1e-12)


def test_kappa_worked_values():
    assert kappa1(2, 4) == pytest.approx(2 * math.sqrt(3), rel=1e-14)
    assert kappa2(2, 4) == pytest.approx(float(Fraction(39337984, 9)), rel=1e-14)
    assert kappa2(2, 1) == pytest.approx(995328, rel=1e-14)
    assert kappa2(3, 4) > kappa2(2, 4)
    assert kappa1(1 + 1e-9, 4) < 1e-8
    assert abs(kappa1(2 + 1e-6, 4) - kappa1(2, 4)) < 1e-4
    assert abs(kappa1(2 - 1e-6, 4) - kappa1(2, 4)) < 1e-4


@pytest.mark.parametrize("fn", [_k1, _k2])
def test_kappa_domain(fn):
    with pytest.raises(DomainError):
        fn(1.0, 3)
    with pytest.raises(DomainError):
        fn(2.0, 0)


def test_b_threshold_examples():
    t = b_threshold(4, 1.0, 1.0, 1.0)
    assert t.value == pytest.approx(2 * math.sqrt(3) + 39337984 / 9, rel=1e-13)
    assert t.value == pytest.approx(4370890.58, abs=5e-3)
    assert b_threshold(4, 1.0, 1e-12, 1.0).value < 1e-5
    assert default_lambda_phi(2.0) == 4.0
    low = b_threshold(2, 1.0, 1.0)
    assert low.vacuous and low.value == 0.0
    with pytest.raises(DomainError):
        b_threshold(3, 1.0, 0.0)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(3, 6), alpha=st.floats(1.0, 3.0), v=st.floats(1e-3, 10.0), f=st.floats(1.01, 3.0))
def test_b_threshold_increasing_in_v0(n, alpha, v, f):
    assert b_threshold(n, alpha, v * f).value > b_threshold(n, alpha, v).value


def test_ode_comparison_examples():
    assert ode_comparison_bound(1.0, 1.0, 0.0, 2.0) == 1.0
    assert ode_comparison_bound(0.1, 4.0, 0.0, 3.0) == pytest.approx(8 ** -0.5, rel=1e-14)
    with pytest.raises(DomainError):
        ode_comparison_bound(1.0, 1.0, 0.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(y0=st.floats(1e-3, 1e3), c1=st.floats(1e-2, 10), c2=st.floats(0, 3), kappa=st.floats(1.1, 4))
def test_ode_comparison_dominance(y0, c1, c2, kappa):
    val = ode_comparison_bound(y0, c1, c2, kappa)
    assert val >= y0 * math.exp(c2)
    second = (c1 * (kappa - 1)) ** (-1 / (kappa - 1))
    big = 2 * max(y0, second)
    assert ode_comparison_bound(big, c1, c2, kappa) == big * math.exp(c2)


def test_eventual_delta_solves_its_inequality():
    p, n, alpha, b = 2.0, 3, 2.0, 10.0
    d = eventual_delta(p, n, alpha, b)
    lam = alpha * alpha
    e = (alpha * (p + 1) - 1) / p

    def lhs(x):
        return kappa1(p, n) * lam ** ((p + 1) / p) * x ** e + kappa2(p, n) * x

    assert lhs(d) <= b < lhs(d * (1 + 1e-9))
    assert eventual_delta(p, n, alpha, 2 * b) > d


def _params(gamma=2.0, alpha=1.0, b=1.0):
    return PhysParams(1.0, b, gamma, PowerLaw(alpha))


def test_classify_examples():
    r = classify_regime(_params(gamma=3.0), 5, 1.0)
    assert r.classical and "superquadratic" in r.classical_guarantee
    r = classify_regime(_params(b=0.01), 2, 1.0)
    assert r.classical and "n <= 2" in r.classical_guarantee
    r = classify_regime(_params(b=1.0), 4, 1.0, lambda_phi=1.0)
    assert not r.classical and r.classical_guarantee == "no guarantee"
    assert r.weak and "alpha >= 1/2" in r.weak_guarantee
    assert r.b_threshold == pytest.approx(4370890.575, rel=1e-9)
    r = classify_regime(_params(b=5e6), 4, 1.0, lambda_phi=1.0)
    assert r.classical


def test_classify_eventual_and_small_alpha():
    assert classify_regime(_params(alpha=2.0), 3, 1.0).eventual
    assert not classify_regime(_params(alpha=1.0), 3, 1.0).eventual
    assert not classify_regime(_params(alpha=2.0, gamma=3.0), 3, 1.0).eventual
    r = classify_regime(PhysParams(1.0, 1.0, 2.0, PowerLaw(0.25, s0=1.0)), 2, 1.0)
    assert not r.classical and r.weak and "root concavity" in r.weak_guarantee


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 5), alpha=st.floats(1.0, 2.5), v=st.floats(1e-4, 2.0),
       b=st.floats(1e-3, 1e8), f=st.floats(1.0, 100.0))
def test_classify_monotone_in_b(n, alpha, v, b, f):
    lo = classify_regime(_params(alpha=alpha, b=b), n, v)
    hi = classify_regime(_params(alpha=alpha, b=b * f), n, v)
    assert hi.classical or not lo.classical


def test_report_serializes():
    d = classify_regime(_params(), 3, 0.5).to_dict()
    assert d["n"] == 3 and isinstance(d["notes"], list)


# weak residuals ------------------------------------------------------------


@pytest.fixture(scope="module")
def smooth_traj():
    g = Grid.uniform(1, 32)
    (x,) = g.mesh()
    u0 = Field(g, 1 + 0.5 * np.cos(np.pi * x))
    v0 = Field(g, 0.8 + 0.2 * np.cos(np.pi * x))
    p = _params(alpha=2.0)
    tr = run(u0, v0, p, 1e-2, SolverConfig(t_end=0.2, record_every_steps=8, snapshots=True))
    return tr, p


def test_weak_residual_zero_test_function(smooth_traj):
    tr, p = smooth_traj
    assert weak_residual(tr, TestFunction((1,), 0.1, 0.0), p) == (0.0, 0.0)


def test_weak_residual_small_on_scheme_output(smooth_traj):
    tr, p = smooth_traj
    for tf in family(1, 0.2, count=4, seed=1):
        ru, rv = weak_residual(tr, tf, p)
        assert ru < 5e-3 and rv < 5e-3


def test_weak_residual_sampling_errors(smooth_traj):
    tr, p = smooth_traj
    with pytest.raises(SamplingError):
        weak_residual(tr, TestFunction((1,), 0.5), p)
    g = Grid.uniform(1, 8)
    coarse = run(Field.constant(g, 1.0), Field.constant(g, 1.0), p, 0.0,
                 SolverConfig(t_end=0.2, record_every=0.05, snapshots=True))
    with pytest.raises(SamplingError):
        weak_residual(coarse, TestFunction((1,), 0.2), p)
    bare = run(Field.constant(g, 1.0), Field.constant(g, 1.0), p, 0.0, SolverConfig(t_end=0.01))
    with pytest.raises(SamplingError):
        weak_residual(bare, TestFunction((1,), 0.01), p)


def test_test_function_family_is_seeded():
    a = family(2, 1.0, seed=4)
    assert a == family(2, 1.0, seed=4)
    assert all(0 < tf.support <= 1.0 and len(tf.modes) == 2 for tf in a)


# studies -----------------------------------------------------------------


def _problem(cells=32, t_end=0.2):
    g = Grid.uniform(1, cells)
    (x,) = g.mesh()
    return Problem(g, _params(alpha=2.0), 1 + 0.5 * np.cos(np.pi * x), 0.8 + 0.2 * np.cos(np.pi * x),
                   SolverConfig(t_end=t_end, record_every=t_end / 20))


def test_eps_study_identical_entries_give_zero_distance():
    st_ = eps_convergence_study(_problem(), [1e-2, 1e-2, 1e-2], workers=1)
    assert st_.distances == [0.0, 0.0]
    assert not st_.cauchy


def test_eps_study_cauchy_on_smooth_problem():
    st_ = eps_convergence_study(_problem(), [1e-1, 1e-2, 1e-3], workers=1)
    assert st_.cauchy and st_.distances[0] > st_.distances[1] > 0
    assert len(list(st_.rows())) == 2


@pytest.mark.parametrize("ladder", [[1e-1, 1e-2], [1e-2, 1e-1, 1e-3], [1.0, 0.5, 0.1], [0.1, 0.0, 0.0]])
def test_eps_study_rejects_bad_ladders(ladder):
    with pytest.raises(ConfigError):
        eps_convergence_study(_problem(), ladder, workers=1)


def test_mms_homogeneous_is_exact():
    res = mms_convergence((8, 16, 32), case="homogeneous", t_end=0.05)
    assert max(res.errors_u) < 1e-12 and max(res.errors_v) < 1e-12


def test_mms_diffusion_order_small_grid():
    res = mms_convergence((16, 32, 64), case="diffusion", t_end=0.05)
    assert res.monotone and res.observed_order > 1.8


@pytest.mark.parametrize("kw", [{"resolutions": (8, 16)}, {"resolutions": (8, 16, 40)}, {"case": "nope"}])
def test_mms_config_errors(kw):
    with pytest.raises(ConfigError):
        mms_convergence(**kw)
