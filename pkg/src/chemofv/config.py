"""YAML run configurations, schema validation and initial-data generators.

Validation errors carry the dotted field path and the source line, e.g.
``line 7: params.b: b must be positive, got -1``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .diagnostics import DiagnosticsConfig
from .dynamics import PhysParams, SolverConfig
from .errors import ChemoError, ConfigError
from .grid import Field, Grid, load_field
from .motility import motility_from_dict

TOP_KEYS = {"grid", "params", "initial", "eps", "solver", "diagnostics", "analysis", "output"}
SOLVER_KEYS = {"t_end", "cfl_safety", "dt_max", "dt_min", "linear_tol", "linear_solver", "cg_maxiter",
               "record_every", "record_every_steps", "snapshots"}
GENERATOR_KEYS = {
    "constant": {"value"},
    "cosine": {"mean", "amplitude", "modes"},
    "gaussian": {"base", "height", "center", "width"},
    "random": {"lo", "hi", "seed"},
    "file": {"path"},
}


# ---------------------------------------------------------------------------
# YAML with line numbers


def _line_index(node, prefix="", out=None):
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key_node, val_node in node.value:
            path = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
            out[path] = key_node.start_mark.line + 1
            _line_index(val_node, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            path = f"{prefix}[{i}]"
            out[path] = item.start_mark.line + 1
            _line_index(item, path, out)
    return out


def load_yaml(text: str, source: str = "<config>"):
    """Parse ``text``; returns ``(data, {dotted path: line})``."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"{source}: malformed YAML: {getattr(exc, 'problem', exc)}", line=line) from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping", line=1)
    return data, (_line_index(node) if node is not None else {})


class _Ctx:
    def __init__(self, lines):
        self.lines = lines

    def err(self, path, msg):
        line = None
        p = path
        while p and line is None:
            line = self.lines.get(p)
            p = p.rsplit(".", 1)[0] if "." in p else ""
        return ConfigError(msg, path=path, line=line)

    def number(self, d, key, path, default=None, positive=False, required=False, integer=False):
        if key not in d or d[key] is None:
            if required:
                raise self.err(path, f"missing required field '{key}'")
            return default
        val = d[key]
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise self.err(f"{path}", f"expected a number, got {val!r}")
        if integer and int(val) != val:
            raise self.err(path, f"expected an integer, got {val!r}")
        if not math.isfinite(val):
            raise self.err(path, f"expected a finite number, got {val!r}")
        if positive and not val > 0:
            raise self.err(path, f"must be positive, got {val!r}")
        return int(val) if integer else float(val)

    def mapping(self, d, key, path, required=True):
        if key not in d:
            if required:
                raise self.err(path, f"missing required block '{key}'")
            return {}
        val = d[key]
        if val is None:
            return {}
        if not isinstance(val, dict):
            raise self.err(path, f"'{key}' must be a mapping")
        return val

    def unknown(self, d, allowed, path):
        extra = sorted(set(d) - set(allowed))
        if extra:
            where = f"{path}.{extra[0]}" if path else extra[0]
            raise self.err(where, f"unknown field '{extra[0]}' (allowed: {', '.join(sorted(allowed))})")


# ---------------------------------------------------------------------------
# initial data


@dataclass(frozen=True)
class InitialSpec:
    kind: str
    options: dict

    def generate(self, grid: Grid, base_dir: Path | None = None) -> np.ndarray:
        return generate_initial(self, grid, base_dir)


def _per_axis(val, dim, name):
    if isinstance(val, (int, float)):
        return [float(val)] * dim
    val = list(val)
    if len(val) != dim:
        raise ConfigError(f"{name} needs {dim} entries, got {len(val)}")
    return [float(x) for x in val]


def generate_initial(spec: InitialSpec, grid: Grid, base_dir: Path | None = None) -> np.ndarray:
    """Cell values of one initial-data generator.

    * ``constant``: ``value``
    * ``cosine``: ``mean + amplitude * prod cos(m_k pi x_k / L_k)``
    * ``gaussian``: ``base + height * exp(-|x - center|**2 / (2 width**2))``
    * ``random``: uniform on ``[lo, hi]`` from a seeded generator
    * ``file``: a field file written by :func:`chemofv.grid.save_field`
    """
    o = spec.options
    mesh = grid.mesh()
    if spec.kind == "constant":
        vals = np.full(grid.shape, float(o["value"]))
    elif spec.kind == "cosine":
        modes = o.get("modes", 1)
        modes = [int(m) for m in _per_axis(modes, grid.dim, "modes")]
        prof = np.ones(grid.shape)
        for m, L, x in zip(modes, grid.lengths, mesh):
            prof = prof * np.cos(m * math.pi * x / L)
        vals = float(o["mean"]) + float(o["amplitude"]) * prof
    elif spec.kind == "gaussian":
        center = _per_axis(o.get("center", [L / 2 for L in grid.lengths]), grid.dim, "center")
        r2 = sum((x - c) ** 2 for x, c in zip(mesh, center))
        vals = float(o["base"]) + float(o["height"]) * np.exp(-r2 / (2 * float(o["width"]) ** 2))
    elif spec.kind == "random":
        rng = np.random.default_rng(int(o.get("seed", 0)))
        vals = rng.uniform(float(o["lo"]), float(o["hi"]), size=grid.shape)
    elif spec.kind == "file":
        p = Path(o["path"])
        if not p.is_absolute() and base_dir is not None:
            p = base_dir / p
        f = load_field(p)
        if f.grid.cells != grid.cells or not np.allclose(f.grid.lengths, grid.lengths):
            raise ConfigError(f"{p}: field grid {f.grid.cells} does not match the run grid {grid.cells}")
        vals = f.values
    else:
        raise ConfigError(f"unknown initial-data generator {spec.kind!r}")
    return np.asarray(vals, dtype=float)


# ---------------------------------------------------------------------------
# run configuration


@dataclass
class RunConfig:
    grid: Grid
    params: PhysParams
    u_init: InitialSpec
    v_init: InitialSpec
    eps: float
    solver: SolverConfig
    diag: DiagnosticsConfig
    n_dim: int
    lambda_phi: float | None
    output_dir: Path
    raw: dict = field(default_factory=dict)
    text: str = ""
    base_dir: Path | None = None

    def initial_fields(self) -> tuple[Field, Field]:
        """Generate ``(u0, v0)`` and enforce strict positivity in every cell."""
        out = []
        for name, spec in (("u", self.u_init), ("v", self.v_init)):
            try:
                vals = spec.generate(self.grid, self.base_dir)
            except ChemoError as exc:
                raise ConfigError(str(exc), path=f"initial.{name}") from exc
            if not np.all(np.isfinite(vals)):
                raise ConfigError("initial data must be finite", path=f"initial.{name}")
            bad = int(np.count_nonzero(vals <= 0))
            if bad:
                raise ConfigError(
                    f"initial {name} must be strictly positive in every cell "
                    f"({bad} cell(s) <= 0, min {float(np.min(vals)):.3g})",
                    path=f"initial.{name}")
            out.append(Field(self.grid, vals))
        return out[0], out[1]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


def _parse_initial(ctx: _Ctx, block, path) -> InitialSpec:
    if not isinstance(block, dict):
        raise ctx.err(path, "initial-data entry must be a mapping with a 'kind'")
    kind = block.get("kind")
    if kind not in GENERATOR_KEYS:
        raise ctx.err(f"{path}.kind", f"unknown generator {kind!r}; expected one of {sorted(GENERATOR_KEYS)}")
    allowed = GENERATOR_KEYS[kind] | {"kind"}
    ctx.unknown(block, allowed, path)
    opts = {k: v for k, v in block.items() if k != "kind"}
    if kind == "constant":
        ctx.number(block, "value", f"{path}.value", required=True)
    elif kind == "cosine":
        ctx.number(block, "mean", f"{path}.mean", required=True)
        ctx.number(block, "amplitude", f"{path}.amplitude", required=True)
    elif kind == "gaussian":
        ctx.number(block, "base", f"{path}.base", required=True)
        ctx.number(block, "height", f"{path}.height", required=True)
        ctx.number(block, "width", f"{path}.width", required=True, positive=True)
    elif kind == "random":
        lo = ctx.number(block, "lo", f"{path}.lo", required=True, positive=True)
        hi = ctx.number(block, "hi", f"{path}.hi", required=True)
        if not hi > lo:
            raise ctx.err(f"{path}.hi", f"need hi > lo, got lo={lo}, hi={hi}")
        ctx.number(block, "seed", f"{path}.seed", default=0, integer=True)
    elif kind == "file":
        if not isinstance(block.get("path"), str):
            raise ctx.err(f"{path}.path", "file generator needs a 'path' string")
    return InitialSpec(kind, opts)


def parse_run_config(text: str, source: str = "<config>", base_dir: Path | None = None) -> RunConfig:
    data, lines = load_yaml(text, source)
    ctx = _Ctx(lines)
    ctx.unknown(data, TOP_KEYS, "")

    g = ctx.mapping(data, "grid", "grid")
    ctx.unknown(g, {"dim", "cells", "lengths"}, "grid")
    dim = ctx.number(g, "dim", "grid.dim", default=1, integer=True)
    if dim not in (1, 2):
        raise ctx.err("grid.dim", f"dim must be 1 or 2, got {dim}")
    try:
        cells = [int(c) for c in _per_axis(g.get("cells", 128), dim, "cells")]
        lengths = _per_axis(g.get("lengths", 1.0), dim, "lengths")
        grid = Grid(tuple(cells), tuple(lengths))
    except (ConfigError, TypeError, ValueError) as exc:
        raise ctx.err("grid", str(getattr(exc, "message", exc))) from exc

    p = ctx.mapping(data, "params", "params")
    ctx.unknown(p, {"a", "b", "gamma", "motility"}, "params")
    a = ctx.number(p, "a", "params.a", required=True)
    b = ctx.number(p, "b", "params.b", required=True)
    gamma = ctx.number(p, "gamma", "params.gamma", default=2.0)
    m = ctx.mapping(p, "motility", "params.motility")
    try:
        mot = motility_from_dict(m)
    except KeyError as exc:
        raise ctx.err("params.motility", f"missing motility field {exc}") from exc
    except (ConfigError, ValueError, TypeError) as exc:
        raise ctx.err("params.motility", str(getattr(exc, "message", exc))) from exc
    try:
        params = PhysParams(a, b, gamma, mot)
    except ConfigError as exc:
        raise ctx.err(exc.path or "params", exc.message) from exc

    ini = ctx.mapping(data, "initial", "initial")
    ctx.unknown(ini, {"u", "v"}, "initial")
    if "u" not in ini or "v" not in ini:
        raise ctx.err("initial", "initial block needs both 'u' and 'v'")
    u_init = _parse_initial(ctx, ini["u"], "initial.u")
    v_init = _parse_initial(ctx, ini["v"], "initial.v")

    eps = ctx.number(data, "eps", "eps", default=0.01)
    if not 0 <= eps < 1:
        raise ctx.err("eps", f"eps must lie in [0, 1), got {eps}")

    s = ctx.mapping(data, "solver", "solver", required=False)
    ctx.unknown(s, SOLVER_KEYS, "solver")
    skw = {}
    for k in ("t_end", "cfl_safety", "dt_max", "dt_min", "linear_tol", "record_every"):
        val = ctx.number(s, k, f"solver.{k}")
        if val is not None:
            skw[k] = val
    for k in ("cg_maxiter", "record_every_steps"):
        val = ctx.number(s, k, f"solver.{k}", integer=True)
        if val is not None:
            skw[k] = val
    if "linear_solver" in s:
        skw["linear_solver"] = s["linear_solver"]
    if "snapshots" in s:
        if not isinstance(s["snapshots"], bool):
            raise ctx.err("solver.snapshots", "snapshots must be true or false")
        skw["snapshots"] = s["snapshots"]
    try:
        solver = SolverConfig(**skw)
    except ConfigError as exc:
        raise ctx.err(exc.path or "solver", exc.message) from exc

    dg = ctx.mapping(data, "diagnostics", "diagnostics", required=False)
    ctx.unknown(dg, {"p_list", "q_list", "dissipation_p", "budget_every_step"}, "diagnostics")
    try:
        p_list = tuple(float(x) for x in dg.get("p_list", [2.0]))
        q_list = tuple(float(x) for x in dg.get("q_list", [2.0]))
        dkw = {"p_list": p_list, "pq_pairs": tuple((pp, qq) for pp in p_list for qq in q_list)}
        if "dissipation_p" in dg:
            dkw["dissipation_p"] = tuple(float(x) for x in dg["dissipation_p"])
        if "budget_every_step" in dg:
            dkw["budget_every_step"] = bool(dg["budget_every_step"])
        diag = DiagnosticsConfig(**dkw)
    except ConfigError as exc:
        raise ctx.err(exc.path or "diagnostics", exc.message) from exc
    except (TypeError, ValueError) as exc:
        raise ctx.err("diagnostics", f"lists must contain numbers ({exc})") from exc

    an = ctx.mapping(data, "analysis", "analysis", required=False)
    ctx.unknown(an, {"n", "lambda_phi"}, "analysis")
    n_dim = ctx.number(an, "n", "analysis.n", default=dim, integer=True)
    if n_dim < 1:
        raise ctx.err("analysis.n", "n must be >= 1")
    lam = ctx.number(an, "lambda_phi", "analysis.lambda_phi", positive=True)

    out = ctx.mapping(data, "output", "output", required=False)
    ctx.unknown(out, {"dir"}, "output")
    out_dir = Path(out.get("dir", "chemofv_out"))
    if base_dir is not None and not out_dir.is_absolute():
        out_dir = base_dir / out_dir

    return RunConfig(grid, params, u_init, v_init, eps, solver, diag, n_dim, lam, out_dir,
                     raw=data, text=text, base_dir=base_dir)


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_run_config(text, source=str(path), base_dir=path.parent)


def dump_run_config(cfg: RunConfig) -> str:
    """YAML text that parses back to an equivalent configuration."""
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
