"""Command-line interface.

Subcommands: ``forward``, ``optimize``, ``grad-check``, ``convergence``,
``preset`` and ``export``. Failures print a JSON object
``{"error": <kind>, "message": <text>, ...}`` to stderr and exit nonzero
(2 for invalid input, 1 for numerical failures).
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .config import ConfigError, build_problem, from_preset, load_scenario
from .forward import run_forward
from .io import (export_fields, read_trajectory, write_diagnostics_csv, write_history_csv, write_line_csv,
                 write_manifest, write_trajectory)
from .linalg import SolverError
from .optimizer import grad_check, make_reduced_functional, minimize
from .scenarios import PRESETS

__all__ = ["main", "convergence_study", "build_parser"]


class CLIError(Exception):
    def __init__(self, kind, message, code=2, **extra):
        super().__init__(message)
        self.kind, self.code, self.extra = kind, code, extra


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def _scenario(args):
    if args.config and args.preset:
        raise CLIError("usage", "give either --preset or --config, not both")
    if args.config:
        return load_scenario(args.config)
    return from_preset(args.preset or getattr(args, "default_preset", None) or "tiny")


def _solver_overrides(args, tol_applies=True):
    ov = {}
    if tol_applies and args.tol is not None:
        ov["tol"] = args.tol
    if args.serial:
        ov["nthreads"] = 1
    return ov


def _outdir(args):
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _snapshot_lines(prob, traj, out, prefix):
    """Line CSV at the configured snapshot time (nearest stored step)."""
    o = prob.config.data["output"]
    line = o.get("line")
    if not line:
        return None
    disc = prob.disc
    t_snap = o.get("snapshot_time")
    n = disc.grid.steps if t_snap is None else int(round(t_snap / disc.grid.dt))
    k = int(np.argmin(np.abs(traj.steps_stored - n)))
    e_full = disc.ops.extend_edges(traj.e[k], disc.mesh.n_edges)
    path = os.path.join(out, f"{prefix}_line.csv")
    write_line_csv(path, disc.mesh, e_full, traj.b[k], line["axis"], line.get("point", [0.0, 0.0, 0.0]),
                   line.get("samples", disc.mesh.counts[line["axis"]] + 1))
    return path


def cmd_forward(args):
    cfg = _scenario(args)
    if args.max_iter is not None:
        ov = dict(_solver_overrides(args), max_iter=args.max_iter)
    else:
        ov = _solver_overrides(args)
    started = _now()
    prob = build_problem(cfg, ov)
    stride = args.stride or cfg.data["output"]["stride"]
    traj, diag = run_forward(prob.disc, stride=stride, store_midpoints=False)
    out = _outdir(args)
    write_diagnostics_csv(os.path.join(out, "diagnostics.csv"), diag, prob.disc.grid)
    write_trajectory(os.path.join(out, "trajectory.mxtrj"), traj)
    _snapshot_lines(prob, traj, out, "forward")
    summary = diag.summary()
    write_manifest(os.path.join(out, "manifest.json"), cfg.hash, summary, started, _now(),
                   extra={"command": "forward", "scenario": cfg.name})
    return {"command": "forward", "scenario": cfg.name, **summary}


def cmd_optimize(args):
    cfg = _scenario(args)
    started = _now()
    prob = build_problem(cfg, _solver_overrides(args, tol_applies=False))
    st = prob.optim
    if args.tol is not None:
        st.tol = args.tol
    if args.max_iter is not None:
        st.max_iter = args.max_iter
    prob.objective.validate(for_optimization=True)
    out = _outdir(args)
    z, rep = minimize(prob.disc, prob.objective, st)
    write_history_csv(os.path.join(out, "history.csv"), rep)
    np.save(os.path.join(out, "control.npy"), z.z)
    stride = args.stride or cfg.data["output"]["stride"]
    traj, diag = run_forward(prob.disc, z, stride=stride, store_midpoints=False)
    write_trajectory(os.path.join(out, "trajectory.mxtrj"), traj)
    write_diagnostics_csv(os.path.join(out, "diagnostics.csv"), diag, prob.disc.grid)
    _snapshot_lines(prob, traj, out, "controlled")
    J = rep.J
    summary = {"J_initial": float(J[0]), "J_final": float(J[-1]), "iterations": len(J) - 1,
               "monotone": rep.monotone, "converged": rep.converged, "line_search_failed": rep.line_search_failed,
               "message": rep.message, "n_evaluations": rep.n_evaluations,
               "tracking_final": float(rep.history[-1].terms["tracking"]),
               "tracking_initial": float(rep.history[0].terms["tracking"]), **diag.summary()}
    write_manifest(os.path.join(out, "manifest.json"), cfg.hash, summary, started, _now(),
                   extra={"command": "optimize", "scenario": cfg.name})
    if rep.line_search_failed:
        raise CLIError("line-search", rep.message, code=1, summary=summary)
    return {"command": "optimize", "scenario": cfg.name, **summary}


def cmd_grad_check(args):
    cfg = _scenario(args)
    prob = build_problem(cfg, _solver_overrides(args))
    disc = prob.disc
    rng = np.random.default_rng(args.seed)
    z = args.control_scale * rng.standard_normal((disc.grid.steps, disc.n_ctrl))
    fun = make_reduced_functional(disc, prob.objective)
    rep = grad_check(fun, z, n_directions=args.directions, seed=args.seed, threshold=args.threshold)
    text = rep.to_text()
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "grad_check.csv"), "w", encoding="ascii") as fh:
            fh.write(text)
    result = {"command": "grad-check", "scenario": cfg.name, "worst_relative_error": rep.worst,
              "threshold": rep.threshold, "passed": rep.passed}
    if not rep.passed:
        raise CLIError("grad-check-failed", f"worst relative error {rep.worst!r} exceeds {rep.threshold!r}",
                       code=1, **result)
    return result


def convergence_study(steps_list=(25, 50, 100, 200), counts=16, solver_overrides=None):
    """Time-step sweep on the manufactured solution; errors in the energy norm at the final time.

    Returns a list of dicts ``{"steps", "dt", "error", "rate"}`` (rate is None for the first level).
    """
    rows = []
    prev = None
    for N in steps_list:
        prob = build_problem(from_preset("manufactured", counts=counts, steps=N), solver_overrides)
        disc = prob.disc
        traj, _ = run_forward(disc, stride=N, store_midpoints=False, diagnostics=False)
        e, b = traj.final
        ex, bx = prob.exact_state(disc.grid.T)
        err = math.sqrt(2.0 * disc.energy(e - ex, b - bx))
        rate = None if prev is None else math.log(prev[1] / err) / math.log(N / prev[0])
        rows.append({"steps": N, "dt": disc.grid.dt, "error": err, "rate": rate})
        prev = (N, err)
    return rows


def cmd_convergence(args):
    steps = tuple(int(s) for s in args.levels.split(","))
    rows = convergence_study(steps, args.counts, _solver_overrides(args) or None)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "convergence.csv"), "w", encoding="ascii") as fh:
            fh.write("steps,dt,error,rate\n")
            for r in rows:
                fh.write(f"{r['steps']},{r['dt']!r},{r['error']!r},{'' if r['rate'] is None else repr(r['rate'])}\n")
    return {"command": "convergence", "levels": rows, "observed_order": rows[-1]["rate"]}


def cmd_preset(args):
    if args.name not in PRESETS:
        raise CLIError("unknown-preset", f"unknown preset {args.name!r}; choose from {sorted(PRESETS)}")
    cfg = from_preset(args.name)
    text = cfg.to_json()
    if args.dump and args.dump != "-":
        with open(args.dump, "w", encoding="utf-8") as fh:
            fh.write(text)
        return {"command": "preset", "name": args.name, "path": args.dump, "config_hash": cfg.hash}
    sys.stdout.write(text)
    return None


def cmd_export(args):
    cfg = _scenario(args)
    prob = build_problem(cfg)
    try:
        container = read_trajectory(args.trajectory)
    except (OSError, ValueError) as exc:
        raise CLIError("bad-trajectory", str(exc)) from None
    disc = prob.disc
    if container["e"].shape[1] != disc.n_e or container["b"].shape[1] != disc.n_b:
        raise CLIError("bad-trajectory", "trajectory does not match the scenario mesh")
    control = np.load(args.control) if args.control else None
    stride = args.stride or container["stride"]
    try:
        paths = export_fields(_outdir(args), disc.mesh, disc, container, stride=stride, fmt=args.format,
                              line=cfg.data["output"].get("line"), control=control)
    except ValueError as exc:
        raise CLIError("export", str(exc)) from None
    return {"command": "export", "files": len(paths)}


def build_parser():
    p = argparse.ArgumentParser(prog="maxcloak", description="Crank-Nicolson Maxwell solver and source cloaking.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("--preset", choices=sorted(PRESETS), help="built-in scenario")
            sp.add_argument("--config", help="scenario JSON file")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--stride", type=int, help="store/export every STRIDE steps")
        sp.add_argument("--tol", type=float, help="linear solver tolerance (optimizer tolerance for optimize)")
        sp.add_argument("--max-iter", type=int, help="CG iteration cap (optimizer iterations for optimize)")
        sp.add_argument("--serial", action="store_true", help="single-threaded kernels")

    common(sub.add_parser("forward", help="run a forward simulation"))
    common(sub.add_parser("optimize", help="solve the cloaking control problem"))
    g = sub.add_parser("grad-check", help="finite-difference check of the reduced gradient")
    common(g)
    g.add_argument("--directions", type=int, default=5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threshold", type=float, default=1e-6)
    g.add_argument("--control-scale", type=float, default=1.0, help="scale of the random base control")
    c = sub.add_parser("convergence", help="manufactured-solution time-step sweep")
    common(c, scenario=False)
    c.add_argument("--levels", default="25,50,100,200", help="comma-separated step counts")
    c.add_argument("--counts", type=int, default=16, help="cells per axis")
    pr = sub.add_parser("preset", help="print or write a built-in scenario")
    pr.add_argument("name")
    pr.add_argument("--dump", nargs="?", const="-", default="-", help="write the scenario JSON to a file")
    e = sub.add_parser("export", help="write VTK or line CSV files from a trajectory container")
    common(e)
    e.add_argument("trajectory")
    e.add_argument("--format", choices=("vtk", "csv"), default="vtk")
    e.add_argument("--control", help="control .npy for the |curl z| field")
    return p


_COMMANDS = {"forward": cmd_forward, "optimize": cmd_optimize, "grad-check": cmd_grad_check,
             "convergence": cmd_convergence, "preset": cmd_preset, "export": cmd_export}


def _fail(kind, message, code, **extra):
    sys.stderr.write(json.dumps({"error": kind, "message": message, **extra}, default=str) + "\n")
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "stride", None) is not None and args.stride < 1:
        return _fail("usage", "--stride must be >= 1", 2)
    t0 = time.perf_counter()
    try:
        result = _COMMANDS[args.command](args)
    except CLIError as exc:
        return _fail(exc.kind, str(exc), exc.code, **exc.extra)
    except ConfigError as exc:
        return _fail("config", "invalid scenario", 2, errors=exc.errors)
    except SolverError as exc:
        return _fail("solver", str(exc), 1, step=exc.step)
    except (OSError, ValueError) as exc:
        return _fail(type(exc).__name__, str(exc), 2)
    if result is not None:
        result["wall_time"] = time.perf_counter() - t0
        sys.stdout.write(json.dumps(result, default=float, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
