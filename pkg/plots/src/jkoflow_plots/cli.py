"""Command-line front end for figure generation from run directories."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import PlotJob, plot_comparison, plot_diagnostics, plot_fields
from .io import RunDirectoryError


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="jkoflow-plots",
        description="Render figures from jkoflow run directories",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    d = sub.add_parser("diagnostics", help="energy and relative-mass-error panels")
    d.add_argument("run_dir", type=Path)
    d.add_argument("--out", type=Path, help="output PNG (default: <run_dir>/diagnostics.png)")

    f = sub.add_parser("fields", help="density snapshots (line/heatmap/isosurface)")
    f.add_argument("run_dir", type=Path)
    f.add_argument("--out", type=Path, help="output PNG (default: <run_dir>/fields.png)")
    f.add_argument("--steps", type=int, nargs="+", help="dump steps to plot (default: all)")
    f.add_argument("--cmap", default="viridis")
    f.add_argument("--iso-level", type=float, default=0.0,
                   help="isosurface level for 3D fields")

    c = sub.add_parser("compare", help="solver iteration-count bars")
    c.add_argument("run_dir", type=Path)
    c.add_argument("--out", type=Path, help="output PNG (default: <run_dir>/comparison.png)")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    default_name = {
        "diagnostics": "diagnostics.png",
        "fields": "fields.png",
        "compare": "comparison.png",
    }[args.command]
    out = args.out or args.run_dir / default_name
    try:
        job = PlotJob(
            run_dir=args.run_dir,
            kind=args.command,
            out=out,
            steps=tuple(args.steps or ()) if args.command == "fields" else (),
            cmap=getattr(args, "cmap", "viridis"),
            iso_level=getattr(args, "iso_level", 0.0),
        )
        if args.command == "diagnostics":
            path = plot_diagnostics(job)
        elif args.command == "fields":
            path = plot_fields(job)
        else:
            path = plot_comparison(job)
    except RunDirectoryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
