import numpy as np
import pytest

from subfbsde import SubordinatorSpec, TimeGrid, build_ensemble


@pytest.fixture(scope="session")
def drift_spec():
    return SubordinatorSpec(kappa=1.0)


@pytest.fixture(scope="session")
def jump_spec():
    return SubordinatorSpec(kappa=1.0, jump_kind="exponential", rate=1.0, jump_param=1.0)


@pytest.fixture(scope="session")
def grid():
    return TimeGrid(a=0.0, T=1.0, n_steps=50)


@pytest.fixture(scope="session")
def drift_ensemble(drift_spec, grid):
    return build_ensemble(drift_spec, grid, n_paths=400, seed=11, x0=0.0)


@pytest.fixture(scope="session")
def jump_ensemble(jump_spec, grid):
    return build_ensemble(jump_spec, grid, n_paths=400, seed=12, x0=0.0)


def rng(seed=0):
    return np.random.default_rng(seed)
