"""Shared fixtures for the MiniHAC test suites."""
import os
import sys

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from core.spatial import PointSet  # noqa: E402

LINKAGES = ["comp", "ward", "avg1", "avg2"]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def line():
    """Build a 1-D PointSet from coordinates."""
    def make(*xs):
        return PointSet(np.array(xs, dtype=np.float64).reshape(-1, 1))
    return make


@pytest.fixture
def generic_points(rng):
    """Random points in general position (distinct pairwise distances with probability 1)."""
    def make(n, d=2, scale=10.0):
        return PointSet(rng.uniform(0.0, scale, size=(n, d)))
    return make


@pytest.fixture
def tmp_config(tmp_path):
    """A config file that keeps logs and results inside the test's temp dir."""
    path = tmp_path / "config.toml"
    path.write_text(
        "[logging]\n"
        f"log_dir = \"{(tmp_path / 'logs').as_posix()}\"\n"
        "level = \"DEBUG\"\n"
        "[output]\n"
        f"results_dir = \"{(tmp_path / 'results').as_posix()}\"\n"
        "[bench]\n"
        "repeats = 1\n",
        encoding="utf-8",
    )
    return str(path)
