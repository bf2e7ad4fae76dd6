"""Shared fixtures for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from jkoflow.grid import GridSpec


@pytest.fixture
def grid_1d_4() -> GridSpec:
    return GridSpec(n=(4,), lo=(0.0,), hi=(4.0,))


@pytest.fixture
def grid_2d_8() -> GridSpec:
    return GridSpec(n=(8, 8), lo=(0.0, 0.0), hi=(1.0, 1.0))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
