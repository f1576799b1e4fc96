"""Command-line entry point: ``chemofv run|sweep|verify|constants|hypotheses``.

Exit codes: 0 success, 1 a monitor or acceptance check failed, 2 bad
configuration or unusable output directory, 3 the run broke down (blow-up,
stiffness below ``dt_min``, degenerate diffusion, loss of positivity).
"""

from __future__ import annotations

import argparse
import copy
import csv
import itertools
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .analysis.constants import b_threshold, classify_regime, kappa1, kappa2
from .analysis.studies import parallel_map, spacetime_l2_distance
from .config import load_yaml, parse_run_config
from .diagnostics import monitor_bounds
from .dynamics import run
from .errors import (
    BlowUpError,
    ChemoError,
    ConfigError,
    ConsistencyError,
    DegeneracyError,
    PositivityError,
    StiffnessError,
)
from .grid import load_field
from .motility import check_hypotheses

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2, 3

RUN_FAILURES = (BlowUpError, StiffnessError, DegeneracyError, PositivityError)


def _err(msg: str) -> None:
    print(f"chemofv: {msg}", file=sys.stderr)


def _ensure_writable(directory: Path) -> None:
    """Create ``directory`` and prove it accepts files, or raise ConfigError."""
    try:
        directory.mkdir(parents=True, exist_ok=True)
        probe = directory / ".chemofv_write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {directory} is not writable: {exc.strerror or exc}") from exc


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


# ---------------------------------------------------------------------------
# run


def execute_run(cfg, out_dir: Path, quiet: bool = False) -> tuple[int, dict]:
    """Run one configuration, write every artifact and return ``(code, summary)``."""
    u0, v0 = cfg.initial_fields()
    _ensure_writable(out_dir)
    (out_dir / "run_config.yaml").write_text(cfg.text or yaml.safe_dump(cfg.raw, sort_keys=False))
    v0_linf = float(np.max(v0.values))
    try:
        regime = classify_regime(cfg.params, cfg.n_dim, v0_linf, cfg.lambda_phi)
    except ConsistencyError as exc:
        raise ConfigError(str(exc), path="params.motility") from exc
    _write_json(out_dir / "threshold_report.json", regime.to_dict())

    summary = {"status": "ok", "classical": regime.classical_guarantee, "weak": regime.weak_guarantee,
               "eventual": regime.eventual_smoothness}
    try:
        traj = run(u0, v0, cfg.params, cfg.eps, cfg.solver, cfg.diag, check_blowup_rerun=True)
    except RUN_FAILURES as exc:
        report = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, BlowUpError):
            if exc.report is not None:
                report.update(exc.report.to_dict())
            if exc.trajectory is not None:
                exc.trajectory.dump(out_dir)
            summary["status"] = "blowup"
        elif isinstance(exc, StiffnessError):
            report.update({"dt": exc.dt, "limiter": exc.limiter})
            summary["status"] = "stiffness"
        else:
            summary["status"] = "breakdown"
        _write_json(out_dir / "blowup_report.json", report)
        summary["message"] = str(exc)
        if not quiet:
            _err(f"run failed: {exc}")
        return EXIT_BLOWUP, summary

    traj.dump(out_dir)
    mon = monitor_bounds(traj, cfg.params, u0, v0)
    mon.to_json(out_dir / "monitor_report.json")
    last = traj.records[-1]
    failed = [r.id for r in mon.results if r.verdict == "fail" and not r.heuristic]
    summary.update({
        "t_final": last.t, "steps": traj.steps, "mass": last.mass, "linf_v": last.linf_v,
        "max_u": last.max_u, "lyapunov": last.lyapunov, "monitors_failed": ";".join(failed),
    })
    if failed:
        summary["status"] = "monitor_fail"
    if not quiet:
        print(f"t = {last.t:g} after {traj.steps} steps; mass {last.mass:.6g}, "
              f"sup v {last.linf_v:.6g}, max u {last.max_u:.6g}")
        for r in mon.results:
            if r.verdict != "n/a":
                print(f"  {r.id:<8s} {r.verdict:<4s} {r.name}")
        print(f"classical: {regime.classical_guarantee}; weak: {regime.weak_guarantee}; "
              f"eventual smoothness: {regime.eventual_smoothness}")
        print(f"wrote {out_dir}")
    return (EXIT_FAIL if failed else EXIT_OK), summary


def cmd_run(args) -> int:
    try:
        cfg = parse_run_config(Path(args.config).read_text(), source=args.config,
                               base_dir=Path(args.config).parent)
        out_dir = Path(args.out) if args.out else cfg.output_dir
        code, _ = execute_run(cfg, out_dir)
        return code
    except OSError as exc:
        _err(f"cannot read {args.config}: {exc.strerror}")
        return EXIT_CONFIG
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG


# ---------------------------------------------------------------------------
# sweep

SWEEP_AXES = ("b", "alpha", "eps", "cells")
SUMMARY_FIELDS = ["index", "b", "alpha", "eps", "cells", "status", "t_final", "steps", "mass", "linf_v",
                  "max_u", "lyapunov", "monitors_failed", "classical", "weak", "eventual", "message"]


def _apply_point(base: dict, point: dict) -> dict:
    d = copy.deepcopy(base)
    if "b" in point:
        d.setdefault("params", {})["b"] = point["b"]
    if "alpha" in point:
        d.setdefault("params", {}).setdefault("motility", {})["alpha"] = point["alpha"]
    if "eps" in point:
        d["eps"] = point["eps"]
    if "cells" in point:
        d.setdefault("grid", {})["cells"] = point["cells"]
    return d


def _sweep_point(job):
    index, point, text, base_dir, out_dir = job
    row = {"index": index, **point}
    try:
        cfg = parse_run_config(text, source=f"sweep point {index}", base_dir=base_dir)
        _, summary = execute_run(cfg, out_dir, quiet=True)
        row.update(summary)
    except ConfigError as exc:
        row.update({"status": "config_error", "message": str(exc)})
    except ChemoError as exc:
        row.update({"status": "error", "message": f"{type(exc).__name__}: {exc}"})
    return row


def parse_sweep_config(text: str, source: str):
    data, lines = load_yaml(text, source)
    extra = sorted(set(data) - {"base", "sweep", "output"})
    if extra:
        raise ConfigError(f"unknown field '{extra[0]}' (allowed: base, output, sweep)",
                          path=extra[0], line=lines.get(extra[0]))
    base = data.get("base")
    if not isinstance(base, dict):
        raise ConfigError("sweep config needs a 'base' run configuration mapping", path="base",
                          line=lines.get("base"))
    axes = data.get("sweep") or {}
    if not isinstance(axes, dict):
        raise ConfigError("'sweep' must map axis names to value lists", path="sweep", line=lines.get("sweep"))
    for k, vals in axes.items():
        if k not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis '{k}' (allowed: {', '.join(SWEEP_AXES)})",
                              path=f"sweep.{k}", line=lines.get(f"sweep.{k}"))
        if not isinstance(vals, list) or not vals:
            raise ConfigError("sweep axis needs a non-empty list", path=f"sweep.{k}", line=lines.get(f"sweep.{k}"))
    out = (data.get("output") or {}).get("dir", "chemofv_sweep")
    return base, {k: axes[k] for k in SWEEP_AXES if k in axes}, out


def eps_distances(rows, out_dir: Path) -> list[dict]:
    """Space-time L2 distances of u between neighbouring eps values of one problem.

    Only points that finished and stored snapshots take part; points are
    grouped by every non-eps sweep coordinate.
    """
    groups = {}
    for r in rows:
        if r.get("status") not in ("ok", "monitor_fail") or "eps" not in r:
            continue
        key = (r.get("b"), r.get("alpha"), r.get("cells"))
        groups.setdefault(key, []).append(r)
    out = []
    for key, members in groups.items():
        members = sorted(members, key=lambda r: -float(r["eps"]))
        series = []
        for r in members:
            sd = out_dir / f"point_{r['index']:04d}" / "snapshots"
            if not (sd / "index.csv").exists():
                break
            with open(sd / "index.csv") as fh:
                idx = list(csv.DictReader(fh))
            t = np.array([float(x["t"]) for x in idx])
            us = [load_field(sd / f"u_{int(x['index']):05d}.bin") for x in idx]
            series.append((float(r["eps"]), t, [f.values for f in us], us[0].grid.cell_volume))
        else:
            for (ea, ta, ua, cv), (eb, tb, ub, _) in zip(series, series[1:]):
                if ta.shape == tb.shape and np.allclose(ta, tb, rtol=0, atol=1e-12):
                    out.append({"b": key[0], "alpha": key[1], "cells": key[2], "eps_a": ea, "eps_b": eb,
                                "distance": spacetime_l2_distance(ta, ua, ub, cv)})
    return out


def cmd_sweep(args) -> int:
    path = Path(args.config)
    try:
        text = path.read_text()
        base, axes, out = parse_sweep_config(text, str(path))
        out_dir = Path(args.out) if args.out else (path.parent / out)
        _ensure_writable(out_dir)
    except OSError as exc:
        _err(f"cannot read {path}: {exc.strerror}")
        return EXIT_CONFIG
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG

    names = list(axes)
    jobs = []
    for index, combo in enumerate(itertools.product(*(axes[k] for k in names))):
        point = dict(zip(names, combo))
        d = _apply_point(base, point)
        d.pop("output", None)
        jobs.append((index, point, yaml.safe_dump(d, sort_keys=False), path.parent,
                     out_dir / f"point_{index:04d}"))
    print(f"sweep: {len(jobs)} points over {', '.join(names) or 'nothing'}")
    rows = parallel_map(_sweep_point, jobs, args.workers)

    with open(out_dir / "sweep_summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in SUMMARY_FIELDS})
    dist = eps_distances(rows, out_dir) if "eps" in axes else []
    if dist:
        with open(out_dir / "sweep_eps_distances.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(dist[0]))
            w.writeheader()
            w.writerows(dist)
    for r in rows:
        coords = ", ".join(f"{k}={r[k]}" for k in names)
        print(f"  [{r['index']:3d}] {coords}: {r.get('status')}")
    print(f"wrote {out_dir / 'sweep_summary.csv'}")
    return EXIT_OK if all(r.get("status") == "ok" for r in rows) else EXIT_FAIL


# ---------------------------------------------------------------------------
# verify


def cmd_verify(args) -> int:
    from .acceptance import run_battery

    out_dir = Path(args.out)
    try:
        _ensure_writable(out_dir)
        ids = [int(x) for x in args.only.split(",")] if args.only else None
        if ids and any(i not in range(1, 13) for i in ids):
            raise ConfigError("criterion ids must lie in 1..12", path="--only")
    except (ConfigError, ValueError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    results = run_battery(ids, echo=print)
    failed = [r.id for r in results if not r.passed]
    _write_json(out_dir / "verify_report.json", {
        "version": __version__, "passed": not failed, "criteria": [r.to_dict() for r in results]})
    if failed:
        print("FAILED criteria: " + ", ".join(f"C{i}" for i in failed))
        return EXIT_FAIL
    print(f"all {len(results)} criteria passed")
    return EXIT_OK


# ---------------------------------------------------------------------------
# constants and hypotheses


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def cmd_constants(args) -> int:
    try:
        ps, ns, alphas = _floats(args.p), [int(x) for x in _floats(args.n)], _floats(args.alpha)
        rows = [{"p": p, "n": n, "kappa1": kappa1(p, n), "kappa2": kappa2(p, n)} for p in ps for n in ns]
        thr = []
        for n in ns:
            for a in alphas:
                t = b_threshold(n, a, args.v0, args.lambda_phi)
                thr.append({"n": n, "alpha": a, "v0_linf": args.v0,
                            "lambda_phi": args.lambda_phi if args.lambda_phi else a * a,
                            "b_threshold": t.value, "vacuous": t.vacuous})
    except (ValueError, ChemoError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    if args.json:
        print(json.dumps({"kappa": rows, "b_threshold": thr}, indent=2))
        return EXIT_OK
    print(f"{'p':>6} {'n':>3} {'kappa1':>22} {'kappa2':>22}")
    for r in rows:
        print(f"{r['p']:>6g} {r['n']:>3d} {r['kappa1']:>22.15g} {r['kappa2']:>22.15g}")
    print()
    print(f"{'n':>3} {'alpha':>6} {'lambda_phi':>10} {'b_threshold':>22}")
    for r in thr:
        val = "0 (vacuous, n <= 2)" if r["vacuous"] else f"{r['b_threshold']:.15g}"
        print(f"{r['n']:>3d} {r['alpha']:>6g} {r['lambda_phi']:>10g} {val:>22}")
    return EXIT_OK


def cmd_hypotheses(args) -> int:
    try:
        cfg = parse_run_config(Path(args.config).read_text(), source=args.config,
                               base_dir=Path(args.config).parent)
    except OSError as exc:
        _err(f"cannot read {args.config}: {exc.strerror}")
        return EXIT_CONFIG
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    modes = ("classical", "weak") if args.mode == "both" else (args.mode,)
    reports, ok = {}, True
    for mode in modes:
        try:
            rep = check_hypotheses(cfg.params.motility, mode)
        except ConsistencyError as exc:
            _err(f"motility rejected: {exc}")
            return EXIT_FAIL
        except ConfigError as exc:
            reports[mode] = {"error": str(exc)}
            ok = False
            continue
        reports[mode] = rep.to_dict()
        ok = ok and rep.passed
        print(f"{mode} hypotheses ({rep.precision} arithmetic): {'pass' if rep.passed else 'fail'}")
        for e in rep.entries:
            print(f"  {e.id:<24s} {'pass' if e.verdict else 'fail'}  observed {e.observed:.6g}")
    if args.json:
        Path(args.json).write_text(json.dumps(reports, indent=2, default=_json_default) + "\n")
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chemofv", description="Finite-volume chemotaxis-consumption simulator.")
    ap.add_argument("--version", action="version", version=f"chemofv {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one configuration and check its bounds")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="cross-product sweep over b, alpha, eps and cells")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: $CHEMOFV_WORKERS or the CPU count)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the acceptance battery")
    p.add_argument("--out", default="chemofv_verify", help="directory for verify_report.json")
    p.add_argument("--only", help="comma-separated criterion ids, e.g. 1,4,12")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("constants", help="print kappa and b-threshold tables")
    p.add_argument("--p", default="1.5,2,3", help="comma-separated p values")
    p.add_argument("--n", default="1,2,3,4,5,6", help="comma-separated dimensions")
    p.add_argument("--alpha", default="1,1.5,2", help="comma-separated alpha values")
    p.add_argument("--v0", type=float, default=1.0, help="sup-norm of v0")
    p.add_argument("--lambda-phi", dest="lambda_phi", type=float, default=None)
    p.add_argument("--json", action="store_true", help="print JSON instead of tables")
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("hypotheses", help="check the motility hypotheses of a configuration")
    p.add_argument("config")
    p.add_argument("--mode", choices=("classical", "weak", "both"), default="both")
    p.add_argument("--json", help="also write the reports to this file")
    p.set_defaults(func=cmd_hypotheses)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
