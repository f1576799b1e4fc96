"""The acceptance battery shared by ``chemofv verify`` and the test suite.

Every criterion compares the simulator against an oracle that does not go
through the code under test: constants against 50-digit mpmath or exact
rationals, homogeneous runs against closed forms, bounds against numbers
computed from the initial data alone.  Expensive trajectories are built once
per :class:`Battery` and shared between criteria.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np

from .analysis import constants
from .analysis.studies import Problem, eps_convergence_study, mms_convergence
from .analysis.weak import test_function_family, weak_residual
from .diagnostics import DiagnosticsConfig, decay_time, monitor_bounds
from .dynamics import PhysParams, SolverConfig, State, run, step_detailed
from .errors import ChemoError, ConsistencyError
from .grid import Field, Grid
from .motility import CustomMotility, PowerLaw, SampleLadder, check_hypotheses

REL_TOL_CONSTANTS = 1e-12


@dataclass
class CriterionResult:
    id: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] C{self.id:<2d} {self.title}: {self.detail} ({self.seconds:.1f} s)"

    def to_dict(self):
        return {"id": self.id, "title": self.title, "passed": self.passed,
                "detail": self.detail, "seconds": self.seconds}


@dataclass
class SuiteRun:
    """A finished run kept for the criteria that aggregate over the suite."""

    label: str
    params: PhysParams
    u0: Field
    v0: Field
    table: dict
    final: State | None = None


# ---------------------------------------------------------------------------
# independent oracles


def kappa1_oracle(p, n, dps: int = 50):
    with mpmath.workdps(dps):
        p, n = mpmath.mpf(p), mpmath.mpf(n)
        rn = mpmath.sqrt(n)
        return (p - 1) ** ((p + 1) / p) * (2 * p + rn) ** (2 / p) * (2 * p - 1) ** (-1 / p)


def kappa2_oracle(p, n, dps: int = 50):
    with mpmath.workdps(dps):
        p, n = mpmath.mpf(p), mpmath.mpf(n)
        rn = mpmath.sqrt(n)
        return (mpmath.mpf(2) ** (3 * p + 2) * (2 * p + rn + 1) ** (2 * p)
                * (2 * p - 2 + rn) ** (p + 1) / (2 * p - 1) ** p)


def logistic_exact(u0: float, a: float, b: float, t: float) -> float:
    return a * u0 / (b * u0 + (a - b * u0) * math.exp(-a * t))


# ---------------------------------------------------------------------------
# the battery


TITLES = {
    1: "constant arithmetic",
    2: "mass upper bound",
    3: "sup-norm of v nonincreasing",
    4: "discrete mass identity",
    5: "homogeneous oracle",
    6: "mass lower bound and Lyapunov sign",
    7: "dissipation budgets",
    8: "eventual decay of sup v",
    9: "manufactured-solution convergence",
    10: "weak-form residual order",
    11: "eps-ladder Cauchy behaviour",
    12: "motility hypothesis checker",
}


@dataclass
class Battery:
    """Acceptance criteria with a shared cache of trajectories."""

    random_cells_1d: int = 48
    random_cells_2d: int = 16
    random_t_end: float = 2.0
    long_cells: int = 256
    weak_levels: tuple = (128, 256)
    mms_levels: tuple = (64, 128, 256)
    mms_t_end: float = 0.1
    eps_cells: int = 256
    _random: list | None = field(default=None, repr=False)
    _long: SuiteRun | None = field(default=None, repr=False)
    _homog: list = field(default_factory=list, repr=False)

    # ---- shared trajectories ------------------------------------------

    def random_runs(self) -> list[SuiteRun]:
        """Twenty seeded random-positive runs, alternating 1D and 2D grids."""
        if self._random is not None:
            return self._random
        out = []
        levels = (0.5, 1.0, 2.0)
        for seed in range(20):
            rng = np.random.default_rng(1000 + seed)
            gamma = (2.0, 3.0)[seed % 2]
            a, b = (float(rng.choice(levels)) for _ in range(2))
            alpha = float(rng.choice((1.0, 2.0)))
            grid = (Grid.uniform(1, self.random_cells_1d) if seed % 4 < 2
                    else Grid.uniform(2, self.random_cells_2d))
            u0 = Field(grid, rng.uniform(0.2, 2.0, size=grid.shape))
            v0 = Field(grid, rng.uniform(0.2, 1.0, size=grid.shape))
            params = PhysParams(a, b, gamma, PowerLaw(alpha))
            cfg = SolverConfig(t_end=self.random_t_end, record_every=self.random_t_end / 40)
            tr = run(u0, v0, params, 1e-2, cfg, DiagnosticsConfig(dissipation_p=(2, 3)))
            label = f"random seed={seed} dim={grid.dim} a={a:g} b={b:g} gamma={gamma:g} alpha={alpha:g}"
            out.append(SuiteRun(label, params, u0, v0, tr.table()))
        self._random = out
        return out

    def long_run(self) -> SuiteRun:
        """Quadratic degradation, alpha = 2, perturbed data, horizon 20."""
        if self._long is None:
            grid = Grid.uniform(1, self.long_cells)
            (x,) = grid.mesh()
            u0 = Field(grid, 1 + 0.5 * np.cos(np.pi * x))
            v0 = Field(grid, 1 + 0.3 * np.cos(2 * np.pi * x))
            params = PhysParams(1.0, 1.0, 2.0, PowerLaw(2.0))
            tr = run(u0, v0, params, 1e-3, SolverConfig(t_end=20.0, record_every=0.1),
                     DiagnosticsConfig(dissipation_p=(2, 3)))
            self._long = SuiteRun("long alpha=2 t_end=20", params, u0, v0, tr.table())
        return self._long

    def suite_runs(self) -> list[SuiteRun]:
        self.criterion_5_runs()
        return [*self.random_runs(), self.long_run(), *self._homog]

    def criterion_5_runs(self):
        if not self._homog:
            self._homogeneous_run()
        return self._homog

    def _homogeneous_run(self):
        a = b = 1.0
        grid = Grid.uniform(1, 8)
        params = PhysParams(a, b, 2.0, PowerLaw(1.0))
        u0 = Field.constant(grid, a / b)
        v0 = Field.constant(grid, 1.0)
        tr = run(u0, v0, params, 0.0, SolverConfig(t_end=1.0, dt_max=1e-3, record_every=0.1))
        self._homog.append(SuiteRun("homogeneous u0=a/b", params, u0, v0, tr.table(), tr.final))
        return self._homog[-1]

    # ---- criteria ------------------------------------------------------

    def c1(self):
        k1 = constants.kappa1(2, 4)
        k2 = constants.kappa2(2, 4)
        with mpmath.workdps(50):
            ref1 = 2 * mpmath.sqrt(3)
            ref2 = mpmath.mpf(Fraction(39337984, 9).numerator) / Fraction(39337984, 9).denominator
            e1 = float(abs((k1 - ref1) / ref1))
            e2 = float(abs((k2 - ref2) / ref2))
            # the closed forms themselves against the formula at 50 digits
            f1 = float(abs((kappa1_oracle(2, 4) - ref1) / ref1))
            f2 = float(abs((kappa2_oracle(2, 4) - ref2) / ref2))
            thr = constants.b_threshold(4, 1.0, 1.0, 1.0)
            e3 = float(abs((thr.value - (ref1 + ref2)) / (ref1 + ref2)))
        worst = max(e1, e2, e3)
        ok = worst <= REL_TOL_CONSTANTS and max(f1, f2) < 1e-40
        return ok, (f"kappa1 rel err {e1:.1e}, kappa2 rel err {e2:.1e}, "
                    f"b_threshold rel err {e3:.1e} (tol {REL_TOL_CONSTANTS:g})")

    def c2(self):
        worst, bad = -math.inf, []
        for r in self.random_runs():
            m1 = max(float(np.sum(r.u0.values)) * r.u0.grid.cell_volume,
                     (r.params.a / r.params.b) ** (1 / (r.params.gamma - 1)) * r.u0.grid.volume)
            excess = float(np.max(r.table["mass"])) - m1
            worst = max(worst, excess / (1 + m1))
            if excess > 1e-8 * (1 + m1):
                bad.append(r.label)
        return not bad, (f"20 runs, max (mass - m1)/(1 + m1) = {worst:.2e}"
                         + (f"; violations: {bad}" if bad else ""))

    def c3(self):
        worst, bad = -math.inf, []
        runs = self.suite_runs()
        for r in runs:
            inc = np.diff(np.asarray(r.table["linf_v"]))
            if inc.size:
                worst = max(worst, float(np.max(inc)))
                if np.max(inc) > 1e-12:
                    bad.append(r.label)
        return not bad, (f"{len(runs)} runs, largest record-to-record increase {worst:.2e}"
                         + (f"; violations: {bad}" if bad else ""))

    def c4(self):
        worst_flux = worst_res = 0.0
        cases = 0
        for seed in range(6):
            rng = np.random.default_rng(seed)
            grid = Grid.uniform(1, 64) if seed % 2 == 0 else Grid((24, 16), (1.0, 0.7))
            u = Field(grid, rng.uniform(0.1, 3.0, size=grid.shape))
            v = Field(grid, rng.uniform(0.1, 2.0, size=grid.shape))
            params = PhysParams(1.0 + seed * 0.3, 0.5 + 0.25 * seed, 2.0 + (seed % 3) * 0.5, PowerLaw(1.0 + 0.5 * seed))
            _, bud = step_detailed(State(u, v, 0.0, 1e-2), params, SolverConfig())
            scale = max(bud.mass_before, 1.0)
            worst_flux = max(worst_flux, abs(bud.flux) / scale)
            reaction = bud.growth - bud.sink
            worst_res = max(worst_res, abs((bud.mass_after - bud.mass_before) - reaction) / scale)
            cases += 1
        ok = worst_flux <= 1e-12 and worst_res <= 1e-12
        return ok, (f"{cases} random steps (1D and 2D): |flux| rel {worst_flux:.1e}, "
                    f"|d mass - reaction| rel {worst_res:.1e}")

    def c5(self):
        r = self.criterion_5_runs()[0]
        a, b = r.params.a, r.params.b
        u_err = float(np.max(np.abs(r.final.u.values - a / b)))
        v_err = abs(float(np.max(r.final.v.values)) - math.exp(-a / b))
        # logistic closed form, dt halving
        u_start = 0.2
        grid = Grid.uniform(1, 8)
        params = PhysParams(a, b, 2.0, PowerLaw(1.0))
        exact = logistic_exact(u_start, a, b, 1.0)
        errs = []
        for dt in (2e-3, 1e-3, 5e-4):
            tr = run(Field.constant(grid, u_start), Field.constant(grid, 1.0), params, 0.0,
                     SolverConfig(t_end=1.0, dt_max=dt, record_every=1.0))
            errs.append(float(np.max(np.abs(tr.final.u.values - exact))))
        orders = [math.log2(e0 / e1) for e0, e1 in zip(errs, errs[1:])]
        ok = u_err <= 1e-10 and v_err <= 2e-3 and min(orders) >= 0.9
        return ok, (f"|u - a/b| = {u_err:.1e}, | |v|_inf - e^(-a/b) | = {v_err:.1e}, "
                    f"logistic errors {', '.join(f'{e:.2e}' for e in errs)}, "
                    f"orders {', '.join(f'{o:.3f}' for o in orders)}")

    def c6(self):
        r = self.long_run()
        floor = 1 / math.e - 1e-6
        mmin = float(np.min(r.table["mass"]))
        lmin = float(np.min(r.table["lyapunov"]))
        ok = mmin >= floor and lmin >= 0.0
        return ok, f"min mass {mmin:.6f} (floor {floor:.6f}), min Lyapunov {lmin:.3e}"

    def c7(self):
        worst, bad, flat = -math.inf, [], []
        runs = self.suite_runs()
        for r in runs:
            cv = r.v0.grid.cell_volume
            for p in (2, 3):
                budget = float(np.sum(r.v0.values ** p)) * cv / (p * (p - 1))
                used = float(np.max(r.table[f"cum_v_diss_{p}"]))
                worst = max(worst, used - budget)
                if used > budget + 1e-6:
                    bad.append(f"{r.label} p={p}")
            dev = np.asarray(r.table["cum_dev_sq"])
            if not np.all(np.isfinite(dev)):
                bad.append(f"{r.label} deviation budget not finite")
            if r.params.gamma == 2:
                m6 = monitor_bounds(r.table, r.params, r.u0, r.v0).get("M6")
                if m6.verdict != "pass":
                    flat.append(r.label)
        ok = not bad and not flat
        detail = f"{len(runs)} runs, max (used - budget) = {worst:.2e}"
        if bad:
            detail += f"; budget violations: {bad}"
        if flat:
            detail += f"; not flattening: {flat}"
        return ok, detail

    def c8(self):
        r = self.long_run()
        t_star = decay_time(r.table, 1e-2)
        if t_star is None:
            return False, f"sup v still above 1e-2 at t = {r.table['t'][-1]:g}"
        after = np.asarray(r.table["linf_v"])[np.asarray(r.table["t"]) >= t_star]
        return bool(np.all(after <= 1e-2)), f"sup v <= 1e-2 from t = {t_star:g} on"

    def c9(self):
        d = mms_convergence(self.mms_levels, "diffusion", t_end=self.mms_t_end)
        f = mms_convergence(self.mms_levels, "drift", t_end=self.mms_t_end)
        ok = d.observed_order >= 1.9 and f.observed_order >= 0.9 and d.monotone and f.monotone
        return ok, (f"cells {list(self.mms_levels)}: diffusion order {d.observed_order:.3f} (>= 1.9), "
                    f"drift order {f.observed_order:.3f} (>= 0.9)")

    def c10(self):
        t_end = 0.25
        params = PhysParams(1.0, 1.0, 2.0, PowerLaw(2.0))
        tests = test_function_family(1, t_end, count=5, seed=0)
        res = []
        for n in self.weak_levels:
            grid = Grid.uniform(1, n)
            (x,) = grid.mesh()
            # snapshot spacing is a fixed number of steps, so it refines with dt
            cfg = SolverConfig(t_end=t_end, record_every=t_end, record_every_steps=16, snapshots=True)
            tr = run(Field(grid, 1 + 0.5 * np.cos(np.pi * x)), Field(grid, 1 + 0.3 * np.cos(np.pi * x)),
                     params, 1e-2, cfg, DiagnosticsConfig(budget_every_step=False))
            res.append([weak_residual(tr, tf, params) for tf in tests])
        res = np.array(res)                     # level x test x (u, v)
        orders = np.log2(res[:-1] / res[1:])
        ou, ov = float(np.min(orders[..., 0])), float(np.min(orders[..., 1]))
        ok = min(ou, ov) >= 0.9
        return ok, f"cells {list(self.weak_levels)}, 5 test functions: min order u {ou:.3f}, v {ov:.3f}"

    def c11(self):
        grid = Grid.uniform(1, self.eps_cells)
        (x,) = grid.mesh()
        u0 = 1 + 3 * np.exp(-((x - 0.5) ** 2) / 0.02)
        v0 = 0.5 + 0.3 * np.cos(2 * np.pi * x)
        prob = Problem(grid, PhysParams(1.0, 1.0, 2.0, PowerLaw(2.0)), u0, v0,
                       SolverConfig(t_end=2.0, record_every=0.04), DiagnosticsConfig(budget_every_step=False))
        st = eps_convergence_study(prob, [1e-1, 1e-2, 1e-3, 1e-4])
        return st.cauchy, "distances " + ", ".join(f"{d:.3e}" for d in st.distances)

    def c12(self):
        ladder = SampleLadder()
        low = check_hypotheses(PowerLaw(0.4, s0=1.0), "weak", ladder)
        conc = low.entry("root_concavity")
        conc_ok = conc.verdict and abs(conc.observed) <= 1e-10
        hi = check_hypotheses(PowerLaw(1.5), "classical", ladder)
        lb, db = hi.entry("lower_power_bound"), hi.entry("derivative_power_bound")
        unit_ok = (lb.verdict and db.verdict
                   and abs(lb.observed - 1) <= 1e-10 and abs(db.observed - 1.5) <= 1e-10)
        bad = CustomMotility.from_expressions("s*(1+s)", "1+s", "2", alpha=1.0)
        try:
            check_hypotheses(bad, "classical", ladder)
            rejected = False
        except ConsistencyError:
            rejected = True
        ok = conc_ok and unit_ok and rejected
        return ok, (f"alpha=0.4 max (phi^(1/alpha))'' = {conc.observed:.1e}; alpha=1.5 ratios "
                    f"{lb.observed:.6g}, {db.observed:.6g}; inconsistent triple "
                    f"{'rejected' if rejected else 'accepted'}")

    # ---- driver ---------------------------------------------------------

    def evaluate(self, cid: int) -> CriterionResult:
        fn = getattr(self, f"c{cid}")
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except ChemoError as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        return CriterionResult(cid, TITLES[cid], bool(ok), detail, time.perf_counter() - t0)


def run_battery(ids=None, battery: Battery | None = None, echo=None) -> list[CriterionResult]:
    """Evaluate the criteria in ``ids`` (all by default) in order."""
    battery = battery or Battery()
    out = []
    for cid in ids or sorted(TITLES):
        res = battery.evaluate(cid)
        if echo is not None:
            echo(res.line())
        out.append(res)
    return out
