"""Shared fixtures; modules live at the repository root and import each other flat."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from point_cloud import generate_interlaced_mesh, generate_jittered_cloud  # noqa: E402


@pytest.fixture
def line_mesh():
    return generate_interlaced_mesh(1, 8, 1.0)


@pytest.fixture
def square_mesh():
    return generate_interlaced_mesh(2, 4, 1.0)


@pytest.fixture
def jittered_square():
    return generate_jittered_cloud(2, 5, 1.0, amplitude=0.3, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
