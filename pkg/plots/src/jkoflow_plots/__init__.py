"""Figure generation for jkoflow run directories."""

from .figures import PlotJob, plot_comparison, plot_diagnostics, plot_fields
from .io import (
    FieldDump,
    RunDirectoryError,
    available_steps,
    load_comparison,
    load_diagnostics,
    load_field,
    load_manifest,
)

__version__ = "0.1.0"

__all__ = [
    "PlotJob",
    "plot_comparison",
    "plot_diagnostics",
    "plot_fields",
    "FieldDump",
    "RunDirectoryError",
    "available_steps",
    "load_comparison",
    "load_diagnostics",
    "load_field",
    "load_manifest",
    "__version__",
]
