"""Command-line front end: run presets or config files, compare solvers."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .driver import (
    PRESET_NAMES,
    SOLVERS,
    FlowConfig,
    NonConvergenceError,
    preset,
    run_flow,
    scaled,
)
from .solver import SolverParams

log = logging.getLogger("jkoflow")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NONCONVERGED = 2


class CliError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", help="experiment preset name")
    p.add_argument("--config", type=Path, help="YAML config file (overrides merge over the preset)")
    p.add_argument("--scale", type=int, default=1, help="coarsen grid and steps by this factor")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--seed", type=int, help="RNG seed for randomized initial data")
    p.add_argument("--threads", type=int, help="BLAS/FFT thread pool size")
    p.add_argument("--strict", action="store_true", help="abort on solver nonconvergence")
    p.add_argument("--tol", type=float, help="constraint residual tolerance")
    p.add_argument("--TOL", type=float, dest="TOL", help="relative-change tolerance")
    p.add_argument("--tau", type=float, help="JKO time step")
    p.add_argument("--steps", type=int, help="number of JKO steps")
    p.add_argument("--dump-every", type=int, default=0,
                   help="dump the density field every k steps (0 = endpoints only)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="jkoflow",
                                 description="Structure-preserving JKO solver for "
                                             "Wasserstein gradient flows")
    sub = ap.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one flow and write diagnostics + field dumps")
    _add_common(run_p)
    run_p.add_argument("--solver", choices=SOLVERS, default="vptpd")

    cmp_p = sub.add_parser("compare", help="run vptpd, vptpd_s and prepdjko on one instance")
    _add_common(cmp_p)

    sub.add_parser("presets", help="list available presets")
    return ap


def _solver_overrides(params: SolverParams, cfg_tree: dict, args) -> SolverParams:
    fields = {f.name for f in dataclasses.fields(SolverParams)}
    updates = {k: v for k, v in cfg_tree.items() if k in fields}
    if args.tol is not None:
        updates["tol"] = args.tol
    if args.TOL is not None:
        updates["TOL"] = args.TOL
    if updates:
        params = dataclasses.replace(params, **updates)
    return params


def load_config(args) -> FlowConfig:
    tree: dict = {}
    if args.config is not None:
        if not args.config.exists():
            raise CliError(f"config file not found: {args.config}")
        tree = yaml.safe_load(args.config.read_text()) or {}
    name = args.preset or tree.get("preset")
    if not name:
        raise CliError("no preset given; use --preset or a config with a 'preset' key")
    if name not in PRESET_NAMES:
        raise CliError(f"unknown preset {name!r}; valid names: {', '.join(PRESET_NAMES)}")
    cfg = preset(name, seed=args.seed if args.seed is not None else int(tree.get("seed", 0)))
    if args.scale and args.scale != 1:
        cfg = scaled(cfg, args.scale)
    solver_tree = tree.get("solver_params", {})
    params = _solver_overrides(cfg.solver_params, solver_tree, args)
    updates: dict = {"solver_params": params}
    if args.tau is not None or "tau" in tree:
        updates["tau"] = args.tau if args.tau is not None else float(tree["tau"])
    if args.steps is not None or "steps" in tree:
        updates["steps"] = args.steps if args.steps is not None else int(tree["steps"])
    return dataclasses.replace(cfg, **updates)


def _apply_threads(n: int | None) -> None:
    if n is None:
        return
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=n)
    except ImportError:
        log.warning("threadpoolctl not installed; --threads ignored")


def _dump_schedule(cfg: FlowConfig, every: int) -> tuple[int, ...]:
    if every and every > 0:
        sched = tuple(range(0, cfg.steps + 1, every))
        return sched if cfg.steps in sched else sched + (cfg.steps,)
    return (0, cfg.steps)


def cmd_run(args) -> int:
    from . import runio

    cfg = load_config(args)
    cfg = dataclasses.replace(cfg, dump_steps=_dump_schedule(cfg, args.dump_every))
    _apply_threads(args.threads)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    runio.write_manifest(out, cfg, args.solver)
    try:
        traj = run_flow(cfg, solver=args.solver, strict=args.strict)
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    runio.write_diagnostics(out, traj)
    for step, rho in sorted(traj.snapshots.items()):
        runio.write_field_dump(out, step, step * cfg.tau, rho, cfg.grid)
    runio.finalize_manifest(out, total_iterations=traj.total_iterations,
                            total_wall_ms=round(traj.total_wall_ms, 3))
    print(f"wrote {out / 'diagnostics.csv'} "
          f"({traj.total_iterations} inner iterations over {cfg.steps} steps)")
    return EXIT_OK


def cmd_compare(args) -> int:
    from . import runio

    cfg = load_config(args)
    _apply_threads(args.threads)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    runio.write_manifest(out, cfg, "compare")
    rows = []
    for solver in SOLVERS:
        try:
            traj = run_flow(cfg, solver=solver, strict=args.strict)
        except NonConvergenceError as exc:
            print(f"error ({solver}): {exc}", file=sys.stderr)
            return EXIT_NONCONVERGED
        rows.append({
            "solver": solver,
            "total_iterations": traj.total_iterations,
            "wall_ms": traj.total_wall_ms,
            "iters_per_step": [r.iterations for r in traj.records[1:]],
        })
        print(f"{solver:10s} {traj.total_iterations:10d} iterations "
              f"{traj.total_wall_ms:12.1f} ms")
    runio.write_comparison(out, rows)
    runio.finalize_manifest(out)
    return EXIT_OK


def cmd_presets(_args) -> int:
    for name in PRESET_NAMES:
        print(name)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "compare":
            return cmd_compare(args)
        return cmd_presets(args)
    except (CliError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
