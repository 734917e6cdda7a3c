import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from newtpot import geom


def gauss_density(x, y):
    return np.exp(-np.asarray(x) ** 2 - np.asarray(y) ** 2)


def sin56_density(x, y):
    return np.sin(5.0 * np.asarray(x) + 6.0 * np.asarray(y))


def const_density(x, y):
    return np.ones_like(np.asarray(x, dtype=float))


@pytest.fixture(scope="session")
def simplex_mesh():
    return geom.triangle_mesh(0.0, 1.0, 1.0j)


@pytest.fixture(scope="session")
def square2_mesh():
    return geom.square_mesh(1)


@pytest.fixture(scope="session")
def disk_mesh():
    return geom.unit_disk_mesh()


@pytest.fixture(scope="session")
def quarter_disk_mesh_unit():
    return geom.quarter_disk_mesh(1.0)


@pytest.fixture(scope="session")
def quarter_disk_mesh_paperarea():
    # quarter disk with the same area as the standard simplex
    return geom.quarter_disk_mesh(np.sqrt(1.0 / (2.0 * np.pi)))
