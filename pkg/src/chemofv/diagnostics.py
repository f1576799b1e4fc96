"""Functionals along trajectories, time-series records and bound monitors."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import PositivityError, ReportError
from .grid import Field, _sl, integrate, weighted_gradient_functional

RECORDS_TAG = "# chemofv-records v1"


def _fmt(p: float) -> str:
    return f"{p:g}"


@dataclass(frozen=True)
class DiagnosticsConfig:
    """Which families of functionals to record.

    ``budget_every_step`` advances the time-integrated columns after every
    step instead of only at record times (much more accurate trapezoid sums).
    """

    p_list: tuple = (2.0,)
    pq_pairs: tuple = ((2.0, 2.0),)
    dissipation_p: tuple = (2.0, 3.0)
    budget_every_step: bool = True

    def __post_init__(self):
        from .errors import ConfigError

        object.__setattr__(self, "p_list", tuple(float(p) for p in self.p_list))
        object.__setattr__(self, "pq_pairs", tuple((float(p), float(q)) for p, q in self.pq_pairs))
        object.__setattr__(self, "dissipation_p", tuple(float(p) for p in self.dissipation_p))
        if any(p < 1 for p in self.p_list):
            raise ConfigError("every p in p_list must be >= 1", path="diagnostics.p_list")
        if any(p < 1 or q < 2 for p, q in self.pq_pairs):
            raise ConfigError("pq_pairs need p >= 1 and q >= 2", path="diagnostics.pq_pairs")
        if any(p <= 1 for p in self.dissipation_p):
            raise ConfigError("dissipation_p entries must exceed 1", path="diagnostics.dissipation_p")

    def columns(self) -> list[str]:
        cols = ["t", "dt", "mass", "linf_v", "min_v", "min_u", "max_u"]
        cols += [f"lp_u_{_fmt(p)}" for p in self.p_list]
        cols += ["entropy", "lyapunov", "dirichlet_v"]
        cols += [f"F_{_fmt(p)}_{_fmt(q)}" for p, q in self.pq_pairs]
        cols += ["ln_inv_v", "w_max", "cum_u_gamma"]
        cols += [f"cum_v_diss_{_fmt(p)}" for p in self.dissipation_p]
        cols += ["cum_dev_sq", "cum_grad_log_v"]
        return cols


# ---------------------------------------------------------------------------
# single-snapshot functionals


def entropy(u: Field) -> float:
    """``integral u ln u`` with ``0 ln 0 = 0``."""
    x = u.values
    if np.any(x < 0):
        raise PositivityError("entropy needs u >= 0")
    safe = np.where(x > 0, x, 1.0)
    return float(np.sum(x * np.log(safe)) * u.grid.cell_volume)


def lyapunov(u: Field, a: float, b: float) -> float:
    """``integral (u - a/b - (a/b) ln(b u / a))``; nonnegative, zero only at ``u = a/b``."""
    x = u.values
    if np.any(x <= 0):
        raise PositivityError("the Lyapunov functional needs u > 0 in every cell")
    c = a / b
    # c * (r - 1 - ln r) with r = u/c; log1p keeps accuracy near the minimum
    r = x / c
    near = np.abs(r - 1.0) < 0.5
    log_r = np.where(near, np.log1p(np.where(near, r - 1.0, 0.0)), np.log(np.where(near, 1.0, r)))
    dens = c * ((r - 1.0) - log_r)
    return float(np.sum(dens) * u.grid.cell_volume)


def w_transform(v: Field, v0_linf: float) -> Field:
    """``w = -ln(v / ||v0||_inf)``, nonnegative while ``v <= ||v0||_inf``."""
    if np.any(v.values <= 0):
        raise PositivityError("w-transform needs v > 0")
    return Field(v.grid, -np.log(v.values / v0_linf))


def w_equation_residual(u_next: Field, v_prev: Field, v_next: Field, dt: float,
                        v0_linf: float, eps: float) -> Field:
    """Cellwise residual of ``w_t - Lap w + |grad w|**2 - u/(1 + eps u)``.

    Evaluated with a backward difference in time at the later snapshot; on
    a trajectory of the scheme it is O(dt + h**2).
    """
    from .grid import _laplacian

    w0 = w_transform(v_prev, v0_linf).values
    w1 = w_transform(v_next, v0_linf).values
    g = v_next.grid
    gradsq = _face_grad_sq_cells(w1, g.h)
    uu = u_next.values
    return Field(g, (w1 - w0) / dt - _laplacian(w1, g.h) + gradsq - uu / (1.0 + eps * uu))


def _face_grad_sq_cells(f, h):
    # |grad f|^2 at cells: per axis, the mean of the squared adjacent face gradients
    out = np.zeros_like(f)
    nd = f.ndim
    for axis, hx in enumerate(h):
        d2 = 0.5 * (np.diff(f, axis=axis) / hx) ** 2
        out[_sl(nd, axis, slice(None, -1))] += d2
        out[_sl(nd, axis, slice(1, None))] += d2
    return out


def _face_weighted_dissipation(v: np.ndarray, h, p: float) -> float:
    """``integral v**(p-2) |grad v|**2`` summed over interior faces."""
    total = 0.0
    cell = math.prod(h)
    for axis, hx in enumerate(h):
        nd = v.ndim
        lo, hi = v[_sl(nd, axis, slice(None, -1))], v[_sl(nd, axis, slice(1, None))]
        vf = 0.5 * (lo + hi)
        d = (hi - lo) / hx
        weight = vf ** (p - 2.0) if p != 2 else 1.0
        total += float(np.sum(weight * d * d))
    return total * cell


# ---------------------------------------------------------------------------
# records


class DiagnosticsRecord:
    """One time-stamped row; columns are reachable as attributes or by key."""

    __slots__ = ("values",)

    def __init__(self, values: dict):
        self.values = dict(values)

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    def __getitem__(self, key):
        return self.values[key]

    def __repr__(self):
        return f"DiagnosticsRecord(t={self.values.get('t')!r}, mass={self.values.get('mass')!r})"


class Accumulators:
    """Running trapezoid sums of the time-integrated budgets."""

    def __init__(self, params, diag: DiagnosticsConfig, v0_linf: float, grid=None):
        self.params = params
        self.diag = diag
        self.v0_linf = float(v0_linf)
        self.t = None
        self._prev = None
        self.totals = {"cum_u_gamma": 0.0, "cum_dev_sq": 0.0, "cum_grad_log_v": 0.0}
        for p in diag.dissipation_p:
            self.totals[f"cum_v_diss_{_fmt(p)}"] = 0.0

    def integrands(self, state) -> dict:
        g = state.grid
        u, v = state.u.values, state.v.values
        cv = g.cell_volume
        gam = self.params.gamma
        c = self.params.a / self.params.b
        out = {
            "cum_u_gamma": float(np.sum(u ** gam if gam != 2 else u * u) * cv),
            "cum_dev_sq": float(np.sum((u - c) ** 2) * cv),
            # |grad v|^2 / v^2 = |grad ln v|^2 on faces
            "cum_grad_log_v": _face_weighted_dissipation(np.log(v), g.h, 2.0),
        }
        for p in self.diag.dissipation_p:
            out[f"cum_v_diss_{_fmt(p)}"] = _face_weighted_dissipation(v, g.h, p)
        return out

    def advance(self, state):
        if self.t is not None and state.t <= self.t:
            return
        cur = self.integrands(state)
        if self.t is not None:
            dt = state.t - self.t
            for k, val in cur.items():
                self.totals[k] += 0.5 * dt * (self._prev[k] + val)
        self.t = state.t
        self._prev = cur


def record(state, params, acc: Accumulators, dt: float = 0.0) -> DiagnosticsRecord:
    """Evaluate every monitored functional on ``state``.

    ``acc`` must already have been advanced to ``state.t``; its running totals
    fill the cumulative columns.
    """
    acc.advance(state)
    diag = acc.diag
    u, v = state.u, state.v
    uv, vv = u.values, v.values
    cv = state.grid.cell_volume
    if np.any(uv <= 0) or np.any(vv <= 0):
        raise PositivityError(f"nonpositive state at t={state.t}")
    row = {
        "t": float(state.t),
        "dt": float(dt),
        "mass": integrate(u),
        "linf_v": float(np.max(vv)),
        "min_v": float(np.min(vv)),
        "min_u": float(np.min(uv)),
        "max_u": float(np.max(uv)),
    }
    for p in diag.p_list:
        row[f"lp_u_{_fmt(p)}"] = float((np.sum(uv ** p) * cv) ** (1.0 / p))
    row["entropy"] = entropy(u)
    row["lyapunov"] = lyapunov(u, params.a, params.b)
    row["dirichlet_v"] = weighted_gradient_functional(v, 2.0)
    for p, q in diag.pq_pairs:
        row[f"F_{_fmt(p)}_{_fmt(q)}"] = float(np.sum(uv ** p) * cv) + weighted_gradient_functional(v, q)
    row["ln_inv_v"] = float(np.sum(-np.log(vv)) * cv)
    row["w_max"] = float(np.max(-np.log(vv / acc.v0_linf)))
    for k in diag.columns():
        if k.startswith("cum_"):
            row[k] = acc.totals[k]
    return DiagnosticsRecord({k: row[k] for k in diag.columns()})


def records_to_table(records) -> dict:
    if not records:
        raise ReportError("no records")
    cols = list(records[0].values)
    return {c: np.array([r.values[c] for r in records], dtype=float) for c in cols}


def write_records_csv(records, path) -> Path:
    path = Path(path)
    table = records_to_table(records)
    cols = list(table)
    with path.open("w", newline="") as fh:
        fh.write(RECORDS_TAG + "\n")
        w = csv.writer(fh)
        w.writerow(cols)
        for r in records:
            w.writerow([repr(float(r.values[c])) for c in cols])
    return path


def read_records_csv(path) -> dict:
    path = Path(path)
    with path.open() as fh:
        tag = fh.readline().strip()
        if tag != RECORDS_TAG:
            raise ReportError(f"{path}: unsupported records header {tag!r}")
        rows = list(csv.reader(fh))
    if not rows:
        raise ReportError(f"{path}: missing column header")
    cols = rows[0]
    data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float).reshape(-1, len(cols))
    return {c: data[:, i] for i, c in enumerate(cols)}


# ---------------------------------------------------------------------------
# monitors


@dataclass(frozen=True)
class MonitorResult:
    id: str
    name: str
    formula: str
    observed: float
    bound: float
    verdict: str                 # "pass" | "fail" | "n/a"
    margin: float
    first_violation_t: float | None = None
    heuristic: bool = False

    def to_dict(self):
        def num(x):
            return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x

        return {
            "id": self.id,
            "name": self.name,
            "formula": self.formula,
            "observed": num(self.observed),
            "bound": num(self.bound),
            "verdict": self.verdict,
            "margin": num(self.margin),
            "first_violation_t": self.first_violation_t,
            "heuristic": self.heuristic,
        }


@dataclass
class MonitorReport:
    results: list = field(default_factory=list)

    def get(self, mid: str) -> MonitorResult:
        for r in self.results:
            if r.id == mid:
                return r
        raise KeyError(mid)

    @property
    def hard_failed(self) -> bool:
        return any(r.verdict == "fail" and not r.heuristic for r in self.results)

    def to_dict(self):
        return {
            "schema": "chemofv-monitors v1",
            "hard_failed": self.hard_failed,
            "monitors": [r.to_dict() for r in self.results],
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=False)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def _upper(mid, name, formula, series, t, bound, tol, heuristic=False) -> MonitorResult:
    viol = np.nonzero(series > bound + tol)[0]
    obs = float(np.max(series))
    return MonitorResult(mid, name, formula, obs, float(bound), "fail" if viol.size else "pass",
                         float(bound - obs), float(t[viol[0]]) if viol.size else None, heuristic)


def _need(table, *cols):
    missing = [c for c in cols if c not in table]
    if missing:
        raise ReportError(f"records lack required columns: {', '.join(missing)}")
    return [np.asarray(table[c], dtype=float) for c in cols]


def window_integrals(t: np.ndarray, cum: np.ndarray, width: float = 1.0) -> np.ndarray:
    """``cum(t_i + width) - cum(t_i)`` for every record with a full window.

    Falls back to the whole run when it is shorter than one window.
    """
    t_end = t[-1]
    if t_end - t[0] < width:
        return np.array([cum[-1] - cum[0]])
    starts = t[t + width <= t_end * (1 + 1e-12)]
    return np.interp(starts + width, t, cum) - np.interp(starts, t, cum)


def mass_upper_bound(params, u0: Field) -> float:
    """``m1 = max(integral u0, (a/b)**(1/(gamma-1)) |Omega|)``."""
    eq = params.equilibrium() if params.gamma > 1 else math.inf
    return max(integrate(u0), eq * u0.grid.volume)


def monitor_bounds(trajectory, params, u0: Field, v0: Field) -> MonitorReport:
    """Check the trajectory-level bounds against a run's records.

    ``trajectory`` may be a :class:`~chemofv.dynamics.Trajectory` or a column
    table (for instance from :func:`read_records_csv`); verdicts depend only
    on the table, ``params`` and the initial data.
    """
    table = trajectory.table() if hasattr(trajectory, "table") else trajectory
    t, mass, linf_v, min_u, min_v = _need(table, "t", "mass", "linf_v", "min_u", "min_v")
    a, b, gam = params.a, params.b, params.gamma
    vol = u0.grid.volume
    rep = MonitorReport()

    pos_ok = bool(np.all(min_u > 0) and np.all(min_v > 0))
    bad = np.nonzero((min_u <= 0) | (min_v <= 0))[0]
    rep.results.append(MonitorResult(
        "P", "positivity", "min u > 0 and min v > 0", float(min(np.min(min_u), np.min(min_v))), 0.0,
        "pass" if pos_ok else "fail", float(min(np.min(min_u), np.min(min_v))),
        float(t[bad[0]]) if bad.size else None))

    m1 = mass_upper_bound(params, u0)
    rep.results.append(_upper("M1", "mass upper bound", "int u <= max(int u0, (a/b)^(1/(gamma-1)) |Omega|)",
                              mass, t, m1, 1e-8 * (1 + m1)))

    (cum_g,) = _need(table, "cum_u_gamma")
    win = window_integrals(t, cum_g)
    m2 = (a + 1) * m1 / b
    rep.results.append(MonitorResult(
        "M2", "unit-window degradation", "int_t^(t+1) int u^gamma <= (a+1) m1 / b",
        float(np.max(win)), m2, "pass" if np.max(win) <= m2 + 1e-8 * (1 + m2) else "fail",
        float(m2 - np.max(win))))

    v0max = float(np.max(v0.values))
    inc = np.diff(linf_v)
    tol3 = 1e-12 * max(1.0, v0max)
    bad = np.nonzero(inc > tol3)[0]
    rep.results.append(MonitorResult(
        "M3", "sup v nonincreasing", "||v(t_k+1)||_inf <= ||v(t_k)||_inf",
        float(np.max(inc)) if inc.size else 0.0, 0.0, "fail" if bad.size else "pass",
        float(-np.max(inc)) if inc.size else 0.0, float(t[bad[0] + 1]) if bad.size else None))
    rep.results.append(_upper("M3b", "sup v below initial sup", "||v||_inf <= ||v0||_inf",
                              linf_v, t, v0max, tol3))

    for col in table:
        if not col.startswith("cum_v_diss_"):
            continue
        p = float(col[len("cum_v_diss_"):])
        bound = float(np.sum(v0.values ** p) * v0.grid.cell_volume) / (p * (p - 1))
        rep.results.append(_upper(f"M4_p{_fmt(p)}", f"signal dissipation budget p={_fmt(p)}",
                                  "int_0^t int v^(p-2)|grad v|^2 <= int v0^p / (p(p-1))",
                                  np.asarray(table[col]), t, bound, 1e-8 * (1 + bound)))

    m5 = a * vol / (b * math.e)
    if gam == 2 and params.motility.alpha > 1:
        viol = np.nonzero(mass < m5 - 1e-8 * (1 + m5))[0]
        rep.results.append(MonitorResult(
            "M5", "mass lower bound", "int u >= a |Omega| / (b e)", float(np.min(mass)), m5,
            "fail" if viol.size else "pass", float(np.min(mass) - m5),
            float(t[viol[0]]) if viol.size else None))
    else:
        rep.results.append(MonitorResult("M5", "mass lower bound", "int u >= a |Omega| / (b e)",
                                         float(np.min(mass)), m5, "n/a", float(np.min(mass) - m5)))

    (dev,) = _need(table, "cum_dev_sq")
    total = float(dev[-1])
    t_cut = t[0] + 0.9 * (t[-1] - t[0])
    tail = total - float(np.interp(t_cut, t, dev))
    if gam == 2:
        ok = math.isfinite(total) and (total == 0 or tail <= 0.2 * total)
        verdict = "pass" if ok else "fail"
    else:
        verdict = "n/a"
    rep.results.append(MonitorResult(
        "M6", "deviation budget flattening", "increment of int int (u - a/b)^2 over last 10% <= 20% of total",
        tail, 0.2 * total, verdict, 0.2 * total - tail, None, heuristic=True))

    if gam == 2 and "lyapunov" in table:
        lyap = np.asarray(table["lyapunov"])
        viol = np.nonzero(lyap < -1e-12)[0]
        rep.results.append(MonitorResult(
            "L", "Lyapunov functional nonnegative", "E(t) >= 0", float(np.min(lyap)), 0.0,
            "fail" if viol.size else "pass", float(np.min(lyap)), float(t[viol[0]]) if viol.size else None))

    for col, name in (("ln_inv_v", "int ln(1/v) series"), ("cum_grad_log_v", "int int |grad v|^2/v^2 series")):
        if col in table:
            s = np.asarray(table[col])
            rep.results.append(MonitorResult(f"S_{col}", name, "reported without a bound", float(np.max(s)),
                                             math.nan, "n/a", math.nan, None, heuristic=True))
    return rep


def decay_time(table, delta: float) -> float | None:
    """First record time after which ``||v||_inf <= delta`` at every later record."""
    t, linf_v = _need(table, "t", "linf_v")
    above = np.nonzero(linf_v > delta)[0]
    if above.size == 0:
        return float(t[0])
    k = above[-1] + 1
    return float(t[k]) if k < t.size else None
