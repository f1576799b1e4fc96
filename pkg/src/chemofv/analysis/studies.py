"""Refinement studies: manufactured solutions and the eps -> 0 ladder."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..diagnostics import DiagnosticsConfig
from ..dynamics import PhysParams, SolverConfig, run
from ..errors import BlowUpError, ConfigError, StiffnessError
from ..grid import Field, Grid
from ..motility import PowerLaw

WORKERS_ENV = "CHEMOFV_WORKERS"


def worker_count(requested: int | None = None) -> int:
    """Explicit request, else ``$CHEMOFV_WORKERS``, else the CPU count."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from exc
    return os.cpu_count() or 1


def parallel_map(fn, items, workers: int | None = None):
    """Ordered map over a process pool (serial when one worker suffices)."""
    items = list(items)
    n = min(worker_count(workers), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# manufactured solutions


@dataclass(frozen=True)
class MMSCase:
    """A manufactured pair on ``(0, 1)`` with cosine profiles.

    ``u* = u_mean + u_amp cos(pi x) e^(-t)`` and
    ``v* = v_mean + v_amp cos(pi x) e^(-t)``; both have zero normal
    derivative at the boundary.
    """

    name: str
    u_mean: float
    u_amp: float
    v_mean: float
    v_amp: float
    with_sources: bool = True

    def exact(self, x, t):
        g = math.exp(-t)
        c = np.cos(np.pi * x)
        return self.u_mean + self.u_amp * c * g, self.v_mean + self.v_amp * c * g

    def sources(self, x, params: PhysParams, eps: float):
        """Return ``t -> (S_u, S_v)`` making ``(u*, v*)`` an exact solution."""
        mot = params.motility
        a, b, gam = params.a, params.b, params.gamma
        pi = math.pi
        c, s = np.cos(pi * x), np.sin(pi * x)

        def src(t):
            g = math.exp(-t)
            u = self.u_mean + self.u_amp * c * g
            v = self.v_mean + self.v_amp * c * g
            u_t = -self.u_amp * c * g
            v_t = -self.v_amp * c * g
            u_x = -pi * self.u_amp * s * g
            v_x = -pi * self.v_amp * s * g
            u_xx = -pi * pi * self.u_amp * c * g
            v_xx = -pi * pi * self.v_amp * c * g
            ph, dph, d2ph = mot.phi(v) + eps, mot.dphi(v), mot.d2phi(v)
            transport = (ph * u_xx + 2.0 * dph * v_x * u_x + u * d2ph * v_x * v_x + u * dph * v_xx)
            s_u = u_t - transport - a * u + b * u ** gam
            s_v = v_t - v_xx + u * v / (1.0 + eps * u)
            if not self.with_sources:
                s_u = np.zeros_like(x)
            return s_u, s_v

        return src


MMS_CASES = {
    "diffusion": MMSCase("diffusion", 2.0, 1.0, 1.0, 0.0),
    "drift": MMSCase("drift", 2.0, 1.0, 1.0, 0.5),
    # u* = a/b, v* constant: the u-source vanishes and only consumption is compensated
    "homogeneous": MMSCase("homogeneous", 1.0, 0.0, 1.0, 0.0, with_sources=False),
}


@dataclass
class MMSResult:
    case: str
    resolutions: list
    errors_u: list
    errors_v: list
    orders_u: list = field(default_factory=list)
    orders_v: list = field(default_factory=list)
    monotone: bool = True

    @property
    def observed_order(self) -> float:
        return min(self.orders_u) if self.orders_u else math.nan

    def to_dict(self):
        return {
            "case": self.case,
            "resolutions": self.resolutions,
            "errors_u": self.errors_u,
            "errors_v": self.errors_v,
            "orders_u": self.orders_u,
            "orders_v": self.orders_v,
            "observed_order": self.observed_order,
            "monotone": self.monotone,
        }


def _orders(errs):
    return [math.log2(e0 / e1) if e1 > 0 and e0 > 0 else math.nan for e0, e1 in zip(errs, errs[1:])]


def mms_convergence(resolutions=(32, 64, 128), case: str = "drift", t_end: float = 0.25,
                    params: PhysParams | None = None, eps: float = 0.0,
                    cfl_safety: float = 0.45) -> MMSResult:
    """Discrete L2 errors at ``t_end`` against a manufactured solution."""
    if len(resolutions) < 3:
        raise ConfigError("need at least 3 resolutions")
    if any(r1 != 2 * r0 for r0, r1 in zip(resolutions, resolutions[1:])):
        raise ConfigError("resolutions must refine by a factor of 2")
    if case not in MMS_CASES:
        raise ConfigError(f"unknown MMS case {case!r}; choose from {sorted(MMS_CASES)}")
    mcase = MMS_CASES[case]
    params = params or PhysParams(1.0, 1.0, 2.0, PowerLaw(2.0))
    if case == "homogeneous":
        mcase = replace(mcase, u_mean=params.equilibrium())
    errs_u, errs_v = [], []
    for n in resolutions:
        g = Grid.uniform(1, n)
        (x,) = g.mesh()
        u0, v0 = mcase.exact(x, 0.0)
        cfg = SolverConfig(t_end=t_end, cfl_safety=cfl_safety, dt_max=1.0, record_every=t_end)
        traj = run(Field(g, u0), Field(g, v0), params, eps, cfg,
                   DiagnosticsConfig(budget_every_step=False), sources=mcase.sources(x, params, eps))
        ue, ve = mcase.exact(x, traj.final.t)
        cv = g.cell_volume
        errs_u.append(float(np.sqrt(np.sum((traj.final.u.values - ue) ** 2) * cv)))
        errs_v.append(float(np.sqrt(np.sum((traj.final.v.values - ve) ** 2) * cv)))
    res = MMSResult(case, list(resolutions), errs_u, errs_v, _orders(errs_u), _orders(errs_v))
    if case != "homogeneous":
        res.monotone = all(e1 < e0 for e0, e1 in zip(errs_u, errs_u[1:]))
    return res


# ---------------------------------------------------------------------------
# eps ladder


@dataclass(frozen=True)
class Problem:
    """A fully specified run apart from ``eps``."""

    grid: Grid
    params: PhysParams
    u0: np.ndarray
    v0: np.ndarray
    solver: SolverConfig
    diag: DiagnosticsConfig = DiagnosticsConfig()


def _run_problem(args):
    problem, eps = args
    solver = replace(problem.solver, snapshots=True)
    if solver.record_every is None:
        solver = replace(solver, record_every=solver.t_end / 50)
    try:
        traj = run(Field(problem.grid, problem.u0), Field(problem.grid, problem.v0),
                   problem.params, eps, solver, problem.diag)
    except BlowUpError as exc:
        return eps, None, None, f"blow-up: {exc}"
    except StiffnessError as exc:
        return eps, None, None, f"stiffness: {exc}"
    return eps, np.array(traj.snapshot_times), np.array(traj.u_snapshots), None


def spacetime_l2_distance(t, ua, ub, cell_volume: float) -> float:
    """``||ua - ub||`` in L2(Omega x (0, T)) by midpoint space / trapezoid time."""
    per_t = np.array([np.sum((x - y) ** 2) for x, y in zip(ua, ub)]) * cell_volume
    return float(math.sqrt(np.sum(0.5 * np.diff(t) * (per_t[1:] + per_t[:-1]))))


@dataclass
class EpsStudy:
    eps: list
    distances: list
    orders: list
    cauchy: bool

    def rows(self):
        for i, d in enumerate(self.distances):
            yield {"eps_a": self.eps[i], "eps_b": self.eps[i + 1], "distance": d,
                   "order": self.orders[i - 1] if i > 0 else math.nan}

    def to_dict(self):
        return {"eps": self.eps, "distances": self.distances, "orders": self.orders, "cauchy": self.cauchy}


def eps_convergence_study(problem: Problem, eps_ladder, workers: int | None = None) -> EpsStudy:
    """Consecutive space-time L2 distances of u down a decreasing eps ladder.

    The estimated order between neighbouring distances is
    ``log(d_i / d_(i+1)) / log(eps_i / eps_(i+1))``.  ``cauchy`` is True when the
    distances strictly decrease.
    """
    ladder = [float(e) for e in eps_ladder]
    if len(ladder) < 3:
        raise ConfigError("eps ladder needs at least 3 entries")
    if any(not 0 < e < 1 for e in ladder):
        raise ConfigError("eps ladder entries must lie in (0, 1)")
    if any(e1 > e0 for e0, e1 in zip(ladder, ladder[1:])):
        raise ConfigError("eps ladder must be non-increasing")
    results = parallel_map(_run_problem, [(problem, e) for e in ladder], workers)
    for eps, _, _, err in results:
        if err is not None:
            raise BlowUpError(f"eps study aborted at eps={eps:g}: {err}")
    cv = problem.grid.cell_volume
    dists = []
    for (ea, ta, ua, _), (eb, tb, ub, _) in zip(results, results[1:]):
        if ta.shape != tb.shape or not np.allclose(ta, tb, rtol=0, atol=1e-12):
            raise ConfigError("runs along the ladder recorded different snapshot times")
        dists.append(spacetime_l2_distance(ta, ua, ub, cv))
    orders = []
    for i in range(len(dists) - 1):
        d0, d1 = dists[i], dists[i + 1]
        r = ladder[i] / ladder[i + 1]
        orders.append(math.log(d0 / d1) / math.log(r) if d0 > 0 and d1 > 0 and r > 1 else math.nan)
    cauchy = all(d1 < d0 for d0, d1 in zip(dists, dists[1:]))
    return EpsStudy(ladder, dists, orders, cauchy)
