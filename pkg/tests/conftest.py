"""Shared fixtures: small clouds, graphs and eigensystems."""
import os
import sys

import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from analysis.geometry import sample_uniform  # noqa: E402
from analysis.graph import build_similarity, laplacian  # noqa: E402
from analysis.spectral import smallest_eigenpairs  # noqa: E402
from models.manifold import ManifoldSpec  # noqa: E402


@pytest.fixture(scope="session")
def torus2():
    return ManifoldSpec("flat_torus", 2)


@pytest.fixture(scope="session")
def sphere():
    return ManifoldSpec("sphere", 2)


@pytest.fixture(scope="session")
def torus_cloud(torus2):
    return sample_uniform(torus2, 400, seed=11)


@pytest.fixture(scope="session")
def torus_lap(torus_cloud):
    return laplacian(build_similarity(torus_cloud, 0.15))


@pytest.fixture(scope="session")
def torus_eig(torus_lap):
    return smallest_eigenpairs(torus_lap, 12, seed=5)


@pytest.fixture
def store(tmp_path):
    from utils.persistence import ResultStore
    return ResultStore(str(tmp_path / "run"))
