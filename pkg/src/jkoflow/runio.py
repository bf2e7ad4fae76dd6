"""Run-directory outputs: manifest, diagnostics CSV, and raw field dumps.

Field dumps are little-endian float64 arrays in the canonical flat cell
ordering (first axis fastest) with a JSON sidecar describing shape, domain
bounds, time, and variable name.
"""

from __future__ import annotations

import csv
import json
import time
from pathlib import Path

import numpy as np

from .driver import FlowConfig, Trajectory
from .grid import GridSpec

DIAGNOSTICS_COLUMNS = (
    "time", "energy", "mass", "rho_min", "rho_max", "iters", "lambda_mean", "wall_ms",
)


def write_manifest(out: Path, cfg: FlowConfig, solver: str, extra: dict | None = None) -> Path:
    from . import __version__

    manifest = {
        "preset": cfg.name,
        "solver": solver,
        "code_version": __version__,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "seed": cfg.seed,
        "tau": cfg.tau,
        "steps": cfg.steps,
        "grid": {"n": list(cfg.grid.n), "lo": list(cfg.grid.lo), "hi": list(cfg.grid.hi)},
        "mobility": {
            "kind": cfg.mobility.kind,
            "xi": cfg.mobility.xi,
            "alpha": cfg.mobility.alpha,
            "beta": cfg.mobility.beta,
        },
        "diagnostics_csv": "diagnostics.csv",
        "fields_dir": "fields",
        "finished": False,
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def finalize_manifest(out: Path, **updates) -> None:
    path = out / "manifest.json"
    manifest = json.loads(path.read_text())
    manifest["finished"] = True
    manifest.update(updates)
    path.write_text(json.dumps(manifest, indent=2) + "\n")


def write_diagnostics(out: Path, traj: Trajectory) -> Path:
    path = out / "diagnostics.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DIAGNOSTICS_COLUMNS)
        for r in traj.records:
            w.writerow([
                f"{r.time:.10g}", f"{r.energy:.17g}", f"{r.mass:.17g}",
                f"{r.rho_min:.17g}", f"{r.rho_max:.17g}", r.iterations,
                f"{r.lambda_mean:.10g}", f"{r.wall_ms:.3f}",
            ])
    return path


def write_field_dump(out: Path, step: int, t: float, rho: np.ndarray, g: GridSpec,
                     variable: str = "rho") -> tuple[Path, Path]:
    fields = out / "fields"
    fields.mkdir(exist_ok=True)
    bin_path = fields / f"step_{step}.bin"
    json_path = fields / f"step_{step}.json"
    np.asarray(rho, dtype="<f8").tofile(bin_path)
    sidecar = {
        "variable": variable,
        "step": step,
        "time": t,
        "shape": list(g.n),
        "bounds": [[float(l), float(h)] for l, h in zip(g.lo, g.hi)],
        "dtype": "<f8",
        "order": "first-axis-fastest",
    }
    json_path.write_text(json.dumps(sidecar, indent=2) + "\n")
    return bin_path, json_path


def write_comparison(out: Path, rows: list[dict]) -> Path:
    path = out / "comparison.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["solver", "total_iterations", "wall_ms", "iters_per_step"])
        for row in rows:
            w.writerow([
                row["solver"], row["total_iterations"], f"{row['wall_ms']:.3f}",
                " ".join(str(i) for i in row["iters_per_step"]),
            ])
    return path
