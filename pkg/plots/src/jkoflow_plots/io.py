"""Read-only access to run directories written by the solver CLI.

A run directory contains:

- ``manifest.json`` — preset, solver, grid shape/bounds, time step;
- ``diagnostics.csv`` — one row per JKO step (time, energy, mass, ...);
- ``fields/step_K.bin`` — little-endian float64 density values in flat cell
  order (first axis fastest), with a ``step_K.json`` sidecar carrying shape,
  domain bounds, and time;
- optionally ``comparison.csv`` — per-solver iteration totals.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DIAGNOSTICS_COLUMNS = (
    "time", "energy", "mass", "rho_min", "rho_max", "iters", "lambda_mean", "wall_ms",
)


class RunDirectoryError(Exception):
    """A run directory is missing or malformed."""


def load_manifest(run_dir: Path) -> dict:
    path = Path(run_dir) / "manifest.json"
    if not path.exists():
        raise RunDirectoryError(f"no manifest.json in {run_dir}")
    return json.loads(path.read_text())


def load_diagnostics(run_dir: Path) -> dict[str, np.ndarray]:
    """Diagnostics table as column name -> float array."""
    path = Path(run_dir) / "diagnostics.csv"
    if not path.exists():
        raise RunDirectoryError(f"no diagnostics.csv in {run_dir}")
    with path.open() as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[1:]:
        raise RunDirectoryError(f"diagnostics.csv in {run_dir} has no data rows")
    header = tuple(rows[0])
    missing = [c for c in DIAGNOSTICS_COLUMNS if c not in header]
    if missing:
        raise RunDirectoryError(
            f"diagnostics.csv in {run_dir} lacks columns: {', '.join(missing)}"
        )
    data = np.array(rows[1:], dtype=float)
    return {name: data[:, header.index(name)] for name in DIAGNOSTICS_COLUMNS}


@dataclass
class FieldDump:
    """One density snapshot restored to its grid shape."""

    step: int
    time: float
    values: np.ndarray  # shape = grid shape
    bounds: list[tuple[float, float]]  # per-axis (lo, hi)

    @property
    def ndim(self) -> int:
        return self.values.ndim


def available_steps(run_dir: Path) -> list[int]:
    fields = Path(run_dir) / "fields"
    if not fields.is_dir():
        return []
    return sorted(int(p.stem.split("_")[1]) for p in fields.glob("step_*.bin"))


def load_field(run_dir: Path, step: int) -> FieldDump:
    fields = Path(run_dir) / "fields"
    bin_path = fields / f"step_{step}.bin"
    json_path = fields / f"step_{step}.json"
    if not bin_path.exists() or not json_path.exists():
        raise RunDirectoryError(f"no field dump for step {step} in {run_dir}")
    side = json.loads(json_path.read_text())
    shape = tuple(side["shape"])
    flat = np.fromfile(bin_path, dtype="<f8")
    if flat.size != int(np.prod(shape)):
        raise RunDirectoryError(
            f"step {step}: {flat.size} values do not match shape {shape}"
        )
    # first axis fastest == Fortran order
    values = flat.reshape(shape, order="F")
    bounds = [(float(lo), float(hi)) for lo, hi in side["bounds"]]
    return FieldDump(step=step, time=float(side["time"]), values=values, bounds=bounds)


def load_comparison(run_dir: Path) -> list[dict]:
    path = Path(run_dir) / "comparison.csv"
    if not path.exists():
        raise RunDirectoryError(f"no comparison.csv in {run_dir}")
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise RunDirectoryError(f"comparison.csv in {run_dir} has no rows")
    return [
        {
            "solver": r["solver"],
            "total_iterations": int(r["total_iterations"]),
            "wall_ms": float(r["wall_ms"]),
            "iters_per_step": [int(s) for s in r["iters_per_step"].split()],
        }
        for r in rows
    ]
