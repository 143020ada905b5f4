import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from abreu.domain import ConvexDomain, build_grid  # noqa: E402

LOG2 = math.log(2.0)


@pytest.fixture(scope="session")
def interval():
    return ConvexDomain.interval(-1.0, 1.0)


@pytest.fixture(scope="session")
def unit_disk():
    return ConvexDomain.disk((0.0, 0.0), 1.0)


@pytest.fixture(scope="session")
def unit_square():
    return ConvexDomain.rectangle([0.0, 0.0], [1.0, 1.0], delzant=True)


@pytest.fixture(scope="session")
def grid_1d_fine(interval):
    return build_grid(interval, 1 / 400)


@pytest.fixture(scope="session")
def grid_1d(interval):
    return build_grid(interval, 1 / 100)


@pytest.fixture(scope="session")
def disk_grid_coarse(unit_disk):
    return build_grid(unit_disk, 1 / 16)


def half_square_norm(p):
    return 0.5 * np.sum(p**2, axis=1)


def profile_function(grid):
    """The ``t -> 0`` 1-D profile as a grid function with ``u = log 2`` on the boundary."""
    from abreu.convex import GridFunction
    from oracles import u_limit

    return GridFunction(grid, u_limit(grid.nodes[:, 0]), np.full(grid.n_boundary, LOG2))
