import numpy as np
import pytest

from velokern.signals import Dims, Trajectory
from velokern.velocity import example_system, simulate_primal


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def example_traj():
    """Noiseless example-system record with N = 120."""
    g = np.random.default_rng(7)
    u = g.normal(size=(121, 1))
    y = simulate_primal(example_system(), u)
    return Trajectory(u, y)


@pytest.fixture
def example_dims(example_traj):
    return Dims.for_trajectory(example_traj, ell=2, L=4, n_a=2, n_b=2)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
