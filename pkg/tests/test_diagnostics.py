import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chemofv.diagnostics import (
    DiagnosticsConfig,
    decay_time,
    entropy,
    lyapunov,
    mass_upper_bound,
    monitor_bounds,
    read_records_csv,
    w_transform,
    window_integrals,
    write_records_csv,
)
from chemofv.dynamics import PhysParams, SolverConfig, run
from chemofv.errors import ConfigError, PositivityError, ReportError
from chemofv.grid import Field, Grid, integrate
from chemofv.motility import PowerLaw

G1 = Grid.uniform(1, 10)


@pytest.mark.parametrize("value,expected", [(1.0, 0.0), (math.e, math.e), (0.0, 0.0)])
def test_entropy_of_constants(value, expected):
    assert entropy(Field.constant(G1, value)) == pytest.approx(expected, abs=1e-15)


def test_entropy_two_level():
    vals = np.array([2.0] * 5 + [1.0] * 5)
    assert entropy(Field(G1, vals)) == pytest.approx(math.log(2), rel=1e-14)
    with pytest.raises(PositivityError):
        entropy(Field(G1, -vals))


def test_lyapunov_examples():
    assert lyapunov(Field.constant(G1, 1.0), 1.0, 1.0) == 0.0
    assert lyapunov(Field.constant(G1, math.e), 1.0, 1.0) == pytest.approx(math.e - 2, rel=1e-14)
    assert lyapunov(Field.constant(G1, 0.5), 2.0, 4.0) == 0.0
    with pytest.raises(PositivityError):
        lyapunov(Field.constant(G1, 0.0), 1.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(arrays(float, 10, elements=st.floats(1e-300, 1e300)), st.floats(0.1, 5), st.floats(0.1, 5))
def test_lyapunov_nonnegative(vals, a, b):
    val = lyapunov(Field(G1, vals), a, b)
    assert val >= 0
    if np.all(vals == a / b):
        assert val == 0


def test_lyapunov_far_below_equilibrium_is_finite():
    val = lyapunov(Field.constant(G1, 1e-300), 40.0, 1e-15)
    assert math.isfinite(val) and val > 0


def test_w_transform():
    v = Field(G1, np.linspace(0.1, 1.0, 10))
    w = w_transform(v, 1.0)
    assert np.all(w.values >= 0) and w.values[-1] == 0
    with pytest.raises(PositivityError):
        w_transform(Field.constant(G1, 0.0), 1.0)


def test_config_validation():
    with pytest.raises(ConfigError):
        DiagnosticsConfig(p_list=(0.5,))
    with pytest.raises(ConfigError):
        DiagnosticsConfig(dissipation_p=(1.0,))
    with pytest.raises(ConfigError):
        DiagnosticsConfig(pq_pairs=((2.0, 1.0),))
    assert "cum_v_diss_3" in DiagnosticsConfig().columns()


def _homogeneous_traj(t_end=0.5, a=1.0, b=1.0):
    g = Grid.uniform(1, 8)
    p = PhysParams(a, b, 2.0, PowerLaw(2.0))
    tr = run(Field.constant(g, a / b), Field.constant(g, 1.0), p, 0.0,
             SolverConfig(t_end=t_end, dt_max=1e-3, record_every=0.1))
    return tr, p, g


def test_homogeneous_record_values():
    tr, p, g = _homogeneous_traj()
    tab = tr.table()
    np.testing.assert_allclose(tab["mass"], 1.0, atol=1e-12)
    np.testing.assert_allclose(tab["lyapunov"], 0.0, atol=1e-14)
    np.testing.assert_allclose(tab["dirichlet_v"], 0.0, atol=1e-14)
    np.testing.assert_allclose(tab["cum_dev_sq"], 0.0, atol=1e-14)
    np.testing.assert_allclose(tab["cum_u_gamma"], tab["t"], rtol=1e-12)
    assert np.all(np.diff(tab["linf_v"]) < 0)


@pytest.fixture(scope="module")
def random_traj():
    g = Grid.uniform(1, 32)
    rng = np.random.default_rng(3)
    u0, v0 = Field(g, rng.uniform(0.2, 2, 32)), Field(g, rng.uniform(0.2, 1, 32))
    p = PhysParams(1.0, 1.0, 2.0, PowerLaw(2.0))
    tr = run(u0, v0, p, 1e-2, SolverConfig(t_end=1.5, record_every=0.05))
    return tr, p, u0, v0


def test_cumulative_columns_nondecreasing(random_traj):
    tab = random_traj[0].table()
    for k in tab:
        if k.startswith("cum_"):
            assert np.all(np.diff(tab[k]) >= 0), k


def test_mass_column_matches_integrate(random_traj):
    tr = random_traj[0]
    assert tr.records[-1].mass == integrate(tr.final.u)


def test_monitors_pass_on_random_run(random_traj):
    tr, p, u0, v0 = random_traj
    rep = monitor_bounds(tr, p, u0, v0)
    assert not rep.hard_failed
    assert rep.get("M1").bound == pytest.approx(max(integrate(u0), 1.0))
    assert rep.get("M5").bound == pytest.approx(1 / math.e)


def test_csv_round_trip_reproduces_verdicts(random_traj, tmp_path):
    tr, p, u0, v0 = random_traj
    path = write_records_csv(tr.records, tmp_path / "records.csv")
    table = read_records_csv(path)
    a = monitor_bounds(tr, p, u0, v0).to_dict()
    b = monitor_bounds(table, p, u0, v0).to_dict()
    assert a == b


def test_csv_rejects_foreign_files(tmp_path):
    f = tmp_path / "x.csv"
    f.write_text("t,mass\n0,1\n")
    with pytest.raises(ReportError):
        read_records_csv(f)


def test_mass_upper_bound_example():
    g = Grid.uniform(1, 4)
    p = PhysParams(2.0, 1.0, 2.0, PowerLaw(1.0))
    assert mass_upper_bound(p, Field.constant(g, 1.0)) == 2.0
    assert mass_upper_bound(p, Field.constant(g, 3.0)) == 3.0


def _synthetic_table(mass, linf_v):
    n = len(mass)
    t = np.linspace(0.0, 2.0, n)
    zeros = np.zeros(n)
    return {"t": t, "mass": np.asarray(mass, float), "linf_v": np.asarray(linf_v, float),
            "min_u": np.ones(n), "min_v": np.full(n, 0.1), "cum_u_gamma": t.copy(),
            "cum_dev_sq": zeros, "lyapunov": zeros}


def test_monitors_flag_synthetic_violations():
    g = Grid.uniform(1, 4)
    p = PhysParams(1.0, 1.0, 2.0, PowerLaw(2.0))
    u0, v0 = Field.constant(g, 1.0), Field.constant(g, 1.0)
    good = monitor_bounds(_synthetic_table([1, 1, 1, 1, 1], [1, .9, .8, .7, .6]), p, u0, v0)
    assert not good.hard_failed
    bad = monitor_bounds(_synthetic_table([1, 1.5, 1, 0.2, 1], [1, .9, .95, .7, .6]), p, u0, v0)
    assert bad.get("M1").verdict == "fail" and bad.get("M1").first_violation_t == pytest.approx(0.5)
    assert bad.get("M3").verdict == "fail" and bad.get("M3").first_violation_t == pytest.approx(1.0)
    assert bad.get("M5").verdict == "fail" and bad.get("M5").first_violation_t == pytest.approx(1.5)
    assert bad.hard_failed


def test_m5_not_applicable_outside_its_regime():
    g = Grid.uniform(1, 4)
    p = PhysParams(1.0, 1.0, 3.0, PowerLaw(2.0))
    rep = monitor_bounds(_synthetic_table([1] * 3, [1] * 3), p, Field.constant(g, 1.0), Field.constant(g, 1.0))
    assert rep.get("M5").verdict == "n/a" and rep.get("M6").verdict == "n/a"


def test_missing_columns():
    g = Grid.uniform(1, 4)
    p = PhysParams(1.0, 1.0, 2.0, PowerLaw(2.0))
    with pytest.raises(ReportError):
        monitor_bounds({"t": np.zeros(2)}, p, Field.constant(g, 1.0), Field.constant(g, 1.0))


def test_window_integrals():
    t = np.linspace(0, 3, 31)
    w = window_integrals(t, 2 * t)
    np.testing.assert_allclose(w, 2.0)
    assert len(w) == 21
    np.testing.assert_allclose(window_integrals(t[:5], 2 * t[:5]), [0.8])


def test_decay_time():
    tab = {"t": np.array([0, 1, 2, 3.0]), "linf_v": np.array([1, 0.5, 0.05, 0.01])}
    assert decay_time(tab, 0.1) == 2.0
    assert decay_time(tab, 2.0) == 0.0
    assert decay_time(tab, 0.001) is None
