import numpy as np
import pytest

from impulsive_duality.critical_point import find_critical_point
from impulsive_duality.function_space import EnsembleProcess, OrbitGrid, trial_function
from impulsive_duality.scenario import builtin


def random_dirichlet(grids, rng, dimension=2, horizon=1.0):
    return EnsembleProcess.from_function(grids, trial_function("sine", rng, horizon, dimension),
                                         dirichlet=True)


@pytest.fixture
def grid():
    return OrbitGrid(1.0)


@pytest.fixture(scope="session")
def solved_fixed():
    """Mountain-pass solution on the deterministic three-impulse power-law orbit."""
    sc = builtin("example-4.1-fixed")
    return sc, find_critical_point(sc)


@pytest.fixture(scope="session")
def solved_quadratic():
    sc = builtin("quadratic")
    return sc, find_critical_point(sc)


@pytest.fixture(scope="session")
def solved_quadratic_impulses():
    sc = builtin("quadratic-impulses")
    return sc, find_critical_point(sc)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
