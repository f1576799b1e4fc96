"""Positivity-preserving finite-volume stepping of the regularized system.

One step of size ``dt`` (first order, operator split):

* u: explicit no-flux fluxes ``phi_eps(v) grad u + u phi'(v) grad v`` with the
  drift part upwinded, explicit growth ``a u``, then the sink ``-b u**gamma``
  absorbed as the positive denominator ``1 + dt b u**(gamma-1)``.
* v: backward-Euler diffusion ``(I - dt Lap) v* = v`` followed by the exact
  consumption factor ``v' = v* / (1 + dt u'/(1 + eps u'))``.

Both updates keep u and v strictly positive and the v-update cannot raise
``max v``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import LinearOperator, cg

from .errors import (
    BlowUpError,
    ConfigError,
    DegeneracyError,
    PositivityError,
    SolverError,
    StiffnessError,
)
from .grid import Field, Grid, _div_interior, _laplacian, _sl, save_field
from .motility import MotilitySpec

log = logging.getLogger(__name__)

OVERFLOW_GUARD = 1e12


@dataclass(frozen=True)
class PhysParams:
    a: float
    b: float
    gamma: float
    motility: MotilitySpec

    def __post_init__(self):
        if not self.a > 0:
            raise ConfigError(f"a must be positive, got {self.a}", path="params.a")
        if not self.b > 0:
            raise ConfigError(f"b must be positive, got {self.b}", path="params.b")
        if not self.gamma >= 1:
            raise ConfigError(f"gamma must be >= 1, got {self.gamma}", path="params.gamma")

    @property
    def theory_regime(self) -> bool:
        """The existence theory assumes quadratic or stronger degradation."""
        return self.gamma >= 2

    @property
    def alpha(self) -> float:
        return self.motility.alpha

    def equilibrium(self) -> float:
        """Positive root of ``a u - b u**gamma`` (``a/b`` for gamma = 2)."""
        if self.gamma == 1:
            raise ConfigError("gamma = 1 has no positive logistic equilibrium")
        return (self.a / self.b) ** (1.0 / (self.gamma - 1.0))


@dataclass
class State:
    u: Field
    v: Field
    t: float = 0.0
    eps: float = 0.0

    def __post_init__(self):
        if not 0 <= self.eps < 1:
            raise ConfigError(f"eps must lie in [0, 1), got {self.eps}", path="eps")
        if self.u.grid != self.v.grid:
            raise ConfigError("u and v live on different grids")

    @property
    def grid(self) -> Grid:
        return self.u.grid

    def check_positive(self):
        if np.any(self.u.values <= 0):
            raise PositivityError("u must be strictly positive in every cell")
        if np.any(self.v.values <= 0):
            raise PositivityError("v must be strictly positive in every cell")


@dataclass(frozen=True)
class SolverConfig:
    """Time-stepping controls.

    Records are taken every ``record_every`` time units (steps are shortened
    to land on those times) or, if ``record_every_steps`` is set, every that
    many steps.
    """

    t_end: float = 1.0
    cfl_safety: float = 0.45
    dt_max: float = 1e-2
    dt_min: float = 1e-12
    linear_tol: float = 1e-10
    linear_solver: str = "dct"
    cg_maxiter: int = 2000
    record_every: float | None = None
    record_every_steps: int | None = None
    snapshots: bool = False

    def __post_init__(self):
        if not 0 < self.cfl_safety <= 1:
            raise ConfigError(f"cfl_safety must be in (0, 1], got {self.cfl_safety}", path="solver.cfl_safety")
        if not (0 < self.dt_min <= self.dt_max):
            raise ConfigError("need 0 < dt_min <= dt_max", path="solver.dt_min")
        if not self.t_end > 0:
            raise ConfigError(f"t_end must be positive, got {self.t_end}", path="solver.t_end")
        if not 0 < self.linear_tol < 1:
            raise ConfigError("linear_tol must be in (0, 1)", path="solver.linear_tol")
        if self.linear_solver not in ("dct", "cg"):
            raise ConfigError(f"linear_solver must be 'dct' or 'cg', got {self.linear_solver!r}",
                              path="solver.linear_solver")
        if self.record_every is not None and not self.record_every > 0:
            raise ConfigError("record_every must be positive", path="solver.record_every")
        if self.record_every_steps is not None and not self.record_every_steps >= 1:
            raise ConfigError("record_every_steps must be >= 1", path="solver.record_every_steps")

    @property
    def record_interval(self) -> float:
        if self.record_every is not None:
            return self.record_every
        if self.record_every_steps is not None:
            return math.inf
        return self.t_end / 100.0


# ---------------------------------------------------------------------------
# u transport


@dataclass
class _FaceData:
    fluxes: list          # per axis, interior faces
    max_diff: float       # max phi_eps over faces and cells
    max_drift: tuple      # per axis max |w|


def _phi_eps(motility, eps, s):
    return motility.phi(s) + eps


def _transport(u, v, h, motility, eps) -> _FaceData:
    fluxes = []
    max_drift = []
    max_diff = float(np.max(_phi_eps(motility, eps, v)))
    for axis, hx in enumerate(h):
        nd = u.ndim
        lo = _sl(nd, axis, slice(None, -1))
        hi = _sl(nd, axis, slice(1, None))
        vf = 0.5 * (v[lo] + v[hi])
        gu = (u[hi] - u[lo]) / hx
        gv = (v[hi] - v[lo]) / hx
        diff = _phi_eps(motility, eps, vf)
        w = motility.dphi(vf) * gv
        # drift velocity of u is -w: donor cell is on the right when w >= 0
        u_up = np.where(w >= 0, u[hi], u[lo])
        fluxes.append(diff * gu + u_up * w)
        max_diff = max(max_diff, float(np.max(diff)))
        max_drift.append(float(np.max(np.abs(w))))
    return _FaceData(fluxes, max_diff, tuple(max_drift))


def _divergence(fd: _FaceData, shape, h) -> np.ndarray:
    out = np.zeros(shape)
    for axis, (F, hx) in enumerate(zip(fd.fluxes, h)):
        _div_interior(F, hx, axis, out)
    return out


def _check_nondegenerate(u, v, motility, eps):
    if np.any(v <= 0):
        if eps == 0:
            raise DegeneracyError("v has a nonpositive cell and eps = 0; run with eps > 0")
        raise PositivityError("v must be strictly positive")
    if eps == 0:
        lo = float(np.min(motility.phi(v)))
        lo = min(lo, float(np.min(motility.phi(np.array([np.min(v)])))))
        if not lo > 0:
            raise DegeneracyError(
                f"phi vanishes on the observed v-range (min phi = {lo:.3g}); eps = 0 needs "
                "phi bounded below by a positive constant, use eps > 0"
            )


def u_rhs_flux_divergence(u: Field, v: Field, params: PhysParams, eps: float) -> Field:
    """Discrete ``div(phi_eps(v) grad u + u phi'(v) grad v)``; reactions excluded."""
    if np.any(u.values <= 0):
        raise PositivityError("u must be strictly positive")
    _check_nondegenerate(u.values, v.values, params.motility, eps)
    g = u.grid
    fd = _transport(u.values, v.values, g.h, params.motility, eps)
    return Field(g, _divergence(fd, g.shape, g.h))


def _dt_from_faces(fd: _FaceData, h, config: SolverConfig):
    diff_rate = sum(2.0 * fd.max_diff / (hx * hx) for hx in h)
    drift_rate = sum(2.0 * m / hx for m, hx in zip(fd.max_drift, h))
    rate = diff_rate + drift_rate
    dt = config.cfl_safety / rate if rate > 0 else math.inf
    limiter = "diffusion" if diff_rate >= drift_rate else "drift"
    if dt >= config.dt_max:
        return config.dt_max, "dt_max"
    if dt < config.dt_min:
        raise StiffnessError(
            f"stable dt {dt:.3e} < dt_min {config.dt_min:.3e} "
            f"(max phi_eps = {fd.max_diff:.3e}, max drift = {max(fd.max_drift):.3e})",
            dt=dt, limiter=limiter,
        )
    return dt, limiter


def stable_dt(state: State, params: PhysParams, config: SolverConfig) -> float:
    """Largest step for which the explicit u-update keeps every cell positive.

    ``dt = safety / (sum_axes 2 max phi_eps / h**2 + sum_axes 2 max|w| / h)``,
    capped by ``dt_max``; for zero drift on a uniform grid this is
    ``safety * h**2 / (2 dim max phi_eps)``.
    """
    _check_nondegenerate(state.u.values, state.v.values, params.motility, state.eps)
    g = state.grid
    fd = _transport(state.u.values, state.v.values, g.h, params.motility, state.eps)
    return _dt_from_faces(fd, g.h, config)[0]


# ---------------------------------------------------------------------------
# implicit v diffusion


class HeatSolver:
    """Solves ``(I - dt Lap_h) x = rhs`` with reflection-ghost Neumann Lap_h.

    ``method="dct"`` diagonalizes Lap_h with the type-II cosine transform
    (exact up to rounding); ``method="cg"`` runs matrix-free conjugate
    gradients.  Both verify the max-norm relative residual against ``tol``.
    """

    def __init__(self, grid: Grid, tol: float = 1e-10, method: str = "dct", maxiter: int = 2000):
        self.grid = grid
        self.tol = tol
        self.method = method
        self.maxiter = maxiter
        eig = np.zeros(grid.shape)
        for axis, (n, hx) in enumerate(zip(grid.cells, grid.h)):
            lam = (2.0 - 2.0 * np.cos(np.pi * np.arange(n) / n)) / (hx * hx)
            shape = [1] * grid.dim
            shape[axis] = n
            eig = eig + lam.reshape(shape)
        self._eig = eig
        self.last_iterations = 0
        self.last_residual = 0.0

    def apply(self, x, dt):
        return x - dt * _laplacian(x, self.grid.h)

    def solve(self, rhs: np.ndarray, dt: float, x0=None) -> np.ndarray:
        scale = float(np.max(np.abs(rhs)))
        if scale == 0:
            return np.zeros_like(rhs)
        if self.method == "dct":
            x = sfft.idctn(sfft.dctn(rhs, type=2, norm="ortho") / (1.0 + dt * self._eig), type=2, norm="ortho")
            self.last_iterations = 0
        else:
            x = self._cg(rhs, dt, rhs.copy() if x0 is None else x0.copy(), scale)
        res = float(np.max(np.abs(self.apply(x, dt) - rhs))) / scale
        self.last_residual = res
        if not res <= self.tol:
            raise SolverError(f"implicit v-solve residual {res:.2e} exceeds tolerance {self.tol:.1e}")
        return x

    def _cg(self, b, dt, x, scale):
        shape, n = b.shape, b.size
        op = LinearOperator((n, n), matvec=lambda y: self.apply(y.reshape(shape), dt).ravel(), dtype=float)
        calls = 0

        def count(_):
            nonlocal calls
            calls += 1

        # the 2-norm target implies a max-norm residual of a tenth of tol, leaving room for rounding
        rtol = 0.1 * self.tol * scale / max(float(np.linalg.norm(b)), 1e-300)
        sol, info = cg(op, b.ravel(), x0=x.ravel(), rtol=rtol, atol=0.0, maxiter=self.maxiter, callback=count)
        self.last_iterations = calls
        if info != 0:
            raise SolverError(f"conjugate gradients did not converge in {self.maxiter} iterations")
        return sol.reshape(shape)


# ---------------------------------------------------------------------------
# one step


@dataclass(frozen=True)
class StepBudget:
    """Per-step mass bookkeeping of the u-update (all in integrated units)."""

    dt: float
    mass_before: float
    mass_after: float
    flux: float       # dt * integral of the transport divergence
    growth: float     # dt * a * integral u
    sink: float       # dt * b * integral u**(gamma-1) u'

    @property
    def residual(self) -> float:
        return self.mass_after - self.mass_before - self.growth + self.sink - self.flux


def _advance(u, v, dt, fd, grid, params, eps, solver, src_u=None, src_v=None):
    h = grid.h
    div = _divergence(fd, grid.shape, h)
    ustar = u + dt * (div + params.a * u)
    if src_u is not None:
        ustar = ustar + dt * src_u
    sink_rate = params.b * (u ** (params.gamma - 1.0) if params.gamma != 2 else u)
    u_new = ustar / (1.0 + dt * sink_rate)
    rhs = v if src_v is None else v + dt * src_v
    vstar = solver.solve(rhs, dt, x0=v)
    consumption = u_new / (1.0 + eps * u_new) if eps else u_new
    v_new = vstar / (1.0 + dt * consumption)
    return u_new, v_new, div, sink_rate


def step_detailed(state: State, params: PhysParams, config: SolverConfig, dt: float | None = None,
                  solver: HeatSolver | None = None, sources=None) -> tuple[State, StepBudget]:
    """One step plus its mass budget; see :func:`step`."""
    g = state.grid
    u, v = state.u.values, state.v.values
    _check_nondegenerate(u, v, params.motility, state.eps)
    fd = _transport(u, v, g.h, params.motility, state.eps)
    dt_stable, _ = _dt_from_faces(fd, g.h, config)
    if dt is None:
        dt = dt_stable
    solver = solver or HeatSolver(g, config.linear_tol, config.linear_solver, config.cg_maxiter)
    src_u = src_v = None
    if sources is not None:
        src_u, _ = sources(state.t)
        _, src_v = sources(state.t + dt)
    u_new, v_new, div, sink_rate = _advance(u, v, dt, fd, g, params, state.eps, solver, src_u, src_v)
    cv = g.cell_volume
    budget = StepBudget(
        dt=dt,
        mass_before=float(np.sum(u) * cv),
        mass_after=float(np.sum(u_new) * cv),
        flux=float(dt * np.sum(div) * cv),
        growth=float(dt * params.a * np.sum(u) * cv),
        sink=float(dt * np.sum(sink_rate * u_new) * cv),
    )
    if src_u is not None:
        budget = replace(budget, growth=budget.growth + float(dt * np.sum(src_u) * cv))
    new = State(Field._trusted(g, u_new), Field._trusted(g, v_new), state.t + dt, state.eps)
    return new, budget


def step(state: State, params: PhysParams, config: SolverConfig, dt: float | None = None,
         solver: HeatSolver | None = None, sources=None) -> State:
    """Advance ``state`` by ``dt`` (default: :func:`stable_dt`).

    ``sources`` is an optional callable ``t -> (S_u, S_v)`` of cell arrays
    added to the u- and v-equations (used by manufactured-solution tests).
    """
    return step_detailed(state, params, config, dt, solver, sources)[0]


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class BlowUpReport:
    t: float
    step: int
    reason: str
    max_u: float
    persists_at_half_dt: bool | None = None

    def to_dict(self):
        return {
            "t": self.t,
            "step": self.step,
            "reason": self.reason,
            "max_u": self.max_u,
            "persists_at_half_dt": self.persists_at_half_dt,
        }


@dataclass
class Trajectory:
    grid: Grid
    params: PhysParams
    eps: float
    config: SolverConfig
    diag: "object"
    u0: Field
    v0: Field
    records: list = field(default_factory=list)
    snapshot_times: list = field(default_factory=list)
    u_snapshots: list = field(default_factory=list)
    v_snapshots: list = field(default_factory=list)
    final: State | None = None
    steps: int = 0

    def table(self) -> dict:
        from .diagnostics import records_to_table

        return records_to_table(self.records)

    def dump(self, directory, run_config_text: str | None = None) -> Path:
        """Write ``records.csv``, an optional echoed config and snapshots."""
        from .diagnostics import write_records_csv

        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        if run_config_text is not None:
            (d / "run_config.yaml").write_text(run_config_text)
        write_records_csv(self.records, d / "records.csv")
        if self.snapshot_times:
            sd = d / "snapshots"
            sd.mkdir(exist_ok=True)
            lines = ["index,t"]
            for i, (t, u, v) in enumerate(zip(self.snapshot_times, self.u_snapshots, self.v_snapshots)):
                save_field(Field(self.grid, u), sd / f"u_{i:05d}.bin")
                save_field(Field(self.grid, v), sd / f"v_{i:05d}.bin")
                lines.append(f"{i},{t!r}")
            (sd / "index.csv").write_text("\n".join(lines) + "\n")
        return d


def run(u0: Field, v0: Field, params: PhysParams, eps: float, config: SolverConfig,
        diag=None, sources=None, check_blowup_rerun: bool = False) -> Trajectory:
    """Integrate from ``(u0, v0)`` to ``config.t_end`` and record diagnostics.

    Raises :class:`BlowUpError` (carrying the partial trajectory) on NaN or
    ``max u > 1e12``.  With ``check_blowup_rerun`` the failing run is repeated
    at half the CFL safety to tell a persistent singularity from a scheme
    instability.
    """
    from .diagnostics import Accumulators, DiagnosticsConfig, record

    diag = diag or DiagnosticsConfig()
    state = State(u0.copy(), v0.copy(), 0.0, eps)
    state.check_positive()
    g = state.grid
    traj = Trajectory(g, params, eps, config, diag, u0.copy(), v0.copy())
    solver = HeatSolver(g, config.linear_tol, config.linear_solver, config.cg_maxiter)
    acc = Accumulators(params, diag, v0_linf=float(np.max(v0.values)), grid=g)

    def emit(st, dt_last):
        acc.advance(st)
        traj.records.append(record(st, params, acc, dt=dt_last))
        if config.snapshots:
            traj.snapshot_times.append(st.t)
            traj.u_snapshots.append(st.u.values.copy())
            traj.v_snapshots.append(st.v.values.copy())

    emit(state, 0.0)
    interval = config.record_interval
    k_next = 1
    t_end = config.t_end
    n = 0
    dt = 0.0
    while state.t < t_end * (1 - 1e-13):
        u, v = state.u.values, state.v.values
        _check_nondegenerate(u, v, params.motility, eps)
        fd = _transport(u, v, g.h, params.motility, eps)
        dt, _ = _dt_from_faces(fd, g.h, config)
        t_target = min(t_end, k_next * interval)
        if state.t + dt >= t_target * (1 - 1e-13):
            dt = t_target - state.t
            land = True
        else:
            land = False
        src_u = src_v = None
        if sources is not None:
            src_u, _ = sources(state.t)
            _, src_v = sources(state.t + dt)
        u_new, v_new, _, _ = _advance(u, v, dt, fd, g, params, eps, solver, src_u, src_v)
        n += 1
        t_new = t_target if land else state.t + dt
        umax = float(np.max(u_new)) if u_new.size else 0.0
        if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(v_new))) or umax > OVERFLOW_GUARD:
            reason = "non-finite values" if not np.isfinite(umax) or not np.all(np.isfinite(v_new)) else "overflow guard"
            report = BlowUpReport(t_new, n, reason, umax)
            if check_blowup_rerun:
                half = replace(config, cfl_safety=config.cfl_safety / 2)
                try:
                    run(u0, v0, params, eps, replace(half, t_end=min(t_end, t_new * 1.5)), diag, sources)
                    persists = False
                except BlowUpError:
                    persists = True
                report = replace(report, persists_at_half_dt=persists)
            traj.final = state
            traj.steps = n
            raise BlowUpError(f"blow-up at t={t_new:.6g} ({reason})", trajectory=traj, report=report)
        if np.any(u_new <= 0) or np.any(v_new <= 0):
            raise PositivityError(f"positivity lost at t={t_new:.6g}; this indicates a scheme defect")
        state = State(Field._trusted(g, u_new), Field._trusted(g, v_new), t_new, eps)
        if diag.budget_every_step:
            acc.advance(state)
        if land and t_target < t_end:
            k_next += 1
        if land or (config.record_every_steps and n % config.record_every_steps == 0) or state.t >= t_end * (1 - 1e-13):
            if not traj.records or traj.records[-1].t < state.t:
                emit(state, dt)
    traj.final = state
    traj.steps = n
    return traj


# ---------------------------------------------------------------------------
# spatially homogeneous oracle


def logistic_closed_form(u0: float, a: float, b: float, t: float) -> float:
    """Exact solution of ``u' = a u - b u**2``."""
    return a * u0 / (b * u0 + (a - b * u0) * math.exp(-a * t))


def homogeneous_oracle(u0: float, v0: float, params: PhysParams, eps: float, t: float,
                       rtol: float = 1e-12) -> tuple[float, float]:
    """``(u(t), v(t))`` of ``u' = a u - b u**gamma``, ``v' = -u v/(1 + eps u)``.

    Integrated with an adaptive 8th-order Runge-Kutta method; for gamma = 2
    the logistic closed form is checked against it.
    """
    if not (u0 > 0 and v0 > 0):
        raise ConfigError("homogeneous oracle needs positive data")
    if t == 0:
        return float(u0), float(v0)
    a, b, gam = params.a, params.b, params.gamma

    def rhs(_, y):
        u, lv = y
        return [a * u - b * u ** gam, -u / (1.0 + eps * u)]

    # v is integrated through log v to keep tiny values accurate
    sol = solve_ivp(rhs, (0.0, t), [u0, math.log(v0)], method="DOP853", rtol=rtol, atol=1e-14)
    if not sol.success:
        raise SolverError(f"homogeneous oracle integration failed: {sol.message}")
    u_t = float(sol.y[0, -1])
    v_t = math.exp(float(sol.y[1, -1]))
    if gam == 2:
        exact = logistic_closed_form(u0, a, b, t)
        if abs(exact - u_t) > 1e-8 * max(1.0, abs(exact)):
            raise SolverError(f"oracle disagrees with logistic closed form: {u_t} vs {exact}")
        u_t = exact
    return u_t, v_t
