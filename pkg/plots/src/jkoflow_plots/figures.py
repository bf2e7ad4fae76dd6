"""Figure rendering: diagnostics panels, field snapshots, solver comparison."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .io import (
    RunDirectoryError,
    available_steps,
    load_comparison,
    load_diagnostics,
    load_field,
    load_manifest,
)


@dataclass
class PlotJob:
    """One figure request against a run directory."""

    run_dir: Path
    kind: str  # "diagnostics" | "fields" | "compare"
    out: Path
    steps: tuple[int, ...] = ()
    cmap: str = "viridis"
    iso_level: float = 0.0

    def __post_init__(self):
        self.run_dir = Path(self.run_dir)
        self.out = Path(self.out)
        # the manifest is the marker of a valid run directory
        self.manifest = load_manifest(self.run_dir)


def plot_diagnostics(job: PlotJob) -> Path:
    """Two-panel figure: energy vs time, relative mass error vs time (log)."""
    diag = load_diagnostics(job.run_dir)
    t = diag["time"]
    energy = diag["energy"]
    mass = diag["mass"]
    rel_mass_err = np.abs(mass - mass[0]) / max(abs(mass[0]), np.finfo(float).tiny)

    fig, (ax_e, ax_m) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax_e.plot(t, energy, lw=1.5)
    ax_e.set_xlabel("t")
    ax_e.set_ylabel("energy")
    ax_e.set_title(job.manifest.get("preset", ""))
    floor = np.finfo(float).tiny
    ax_m.semilogy(t, np.maximum(rel_mass_err, floor), lw=1.5)
    ax_m.set_xlabel("t")
    ax_m.set_ylabel("relative mass error")
    fig.tight_layout()
    job.out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(job.out, dpi=150)
    plt.close(fig)
    return job.out


def _plot_field_1d(ax, dump, cmap):
    (lo, hi) = dump.bounds[0]
    n = dump.values.shape[0]
    x = lo + (np.arange(n) + 0.5) * (hi - lo) / n
    ax.plot(x, dump.values, lw=1.5)
    ax.set_xlabel("x")
    ax.set_ylabel("rho")


def _plot_field_2d(ax, dump, cmap):
    (x0, x1), (y0, y1) = dump.bounds
    im = ax.imshow(
        dump.values.T,
        origin="lower",
        extent=(x0, x1, y0, y1),
        cmap=cmap,
        aspect="auto",
    )
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.figure.colorbar(im, ax=ax, shrink=0.85)


def _plot_field_3d(ax, dump, level):
    from skimage.measure import marching_cubes

    vals = dump.values
    vmin, vmax = float(vals.min()), float(vals.max())
    if not (vmin < level < vmax):
        raise RunDirectoryError(
            f"isosurface level {level} outside data range [{vmin:.3g}, {vmax:.3g}]"
        )
    spacing = tuple(
        (hi - lo) / n for (lo, hi), n in zip(dump.bounds, vals.shape)
    )
    verts, faces, _, _ = marching_cubes(vals, level=level, spacing=spacing)
    origin = np.array([lo for lo, _ in dump.bounds])
    verts = verts + origin
    ax.plot_trisurf(
        verts[:, 0], verts[:, 1], faces, verts[:, 2], lw=0.1, alpha=0.8
    )
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_zlabel("z")


def plot_fields(job: PlotJob) -> Path:
    """Snapshot figure: line plots (1D), heatmaps (2D), or isosurfaces (3D)."""
    steps = job.steps or tuple(available_steps(job.run_dir))
    if not steps:
        raise RunDirectoryError(f"no field dumps in {job.run_dir}")
    dumps = [load_field(job.run_dir, s) for s in steps]
    d = dumps[0].ndim
    ncols = len(dumps)
    subplot_kw = {"projection": "3d"} if d == 3 else {}
    fig, axes = plt.subplots(
        1, ncols, figsize=(4 * ncols, 3.4), subplot_kw=subplot_kw, squeeze=False
    )
    for ax, dump in zip(axes[0], dumps):
        if d == 1:
            _plot_field_1d(ax, dump, job.cmap)
        elif d == 2:
            _plot_field_2d(ax, dump, job.cmap)
        else:
            _plot_field_3d(ax, dump, job.iso_level)
        ax.set_title(f"t = {dump.time:g}")
    fig.tight_layout()
    job.out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(job.out, dpi=150)
    plt.close(fig)
    return job.out


def plot_comparison(job: PlotJob) -> Path:
    """Bar chart of total inner iterations per solver."""
    rows = load_comparison(job.run_dir)
    names = [r["solver"] for r in rows]
    totals = [r["total_iterations"] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.bar(names, totals)
    ax.set_ylabel("total inner iterations")
    for i, v in enumerate(totals):
        ax.text(i, v, f"{v}", ha="center", va="bottom", fontsize=9)
    fig.tight_layout()
    job.out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(job.out, dpi=150)
    plt.close(fig)
    return job.out
