import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT))

from topogen.config import DatasetConfig
from topogen.environment import Environment
from topogen.mesh import TriangleMesh, box_mesh
from topogen.seeds import make_genus_g_seed


@pytest.fixture
def tetrahedron():
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    faces = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    return TriangleMesh(verts, faces)


@pytest.fixture
def unit_cube():
    return box_mesh((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


@pytest.fixture
def torus():
    return make_genus_g_seed(1)


@pytest.fixture
def empty_env():
    return Environment.empty()


@pytest.fixture(scope="session")
def tiny_config():
    """Two genera, one run each, no growth: fast enough for end-to-end tests."""
    return DatasetConfig.model_validate(
        {
            "genus_range": [0, 1],
            "samples_per_genus": 1,
            "voxel_resolution": 24,
            "master_seed": 1234,
            "point_count": 256,
            "growth": {"target_area_multiplier": 1.0},
            "displacement": {"enabled": False},
            "environment": {
                "random_grid": {"connection_probability_range": [0.0, 0.05]},
            },
        }
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full desk-scale runs (deselect with -m 'not slow')")
