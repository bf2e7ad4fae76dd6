"""Shared fixtures: synthetic run directories written in the documented formats."""

import numpy as np
import pytest

from synthetic import write_diagnostics, write_field, write_manifest


@pytest.fixture
def run_dir(tmp_path):
    """Minimal complete 1D run directory."""
    write_manifest(tmp_path)
    write_diagnostics(tmp_path, [1.0, 0.8, 0.7, 0.65])
    x = np.linspace(0.0, 1.0, 8)
    write_field(tmp_path, 0, np.sin(np.pi * x), [(0.0, 1.0)], t=0.0)
    write_field(tmp_path, 3, 0.5 * np.sin(np.pi * x), [(0.0, 1.0)], t=0.03)
    return tmp_path
