import math

import numpy as np
import pytest

from cqac.grid import build_grid


def nu_h(grid, k1, k2):
    """Closed-form eigenvalue of the negative five-point Laplacian for sine mode (k1, k2)."""
    return (4 / grid.hx**2) * math.sin(k1 * math.pi / (2 * grid.M)) ** 2 + (4 / grid.hy**2) * math.sin(
        k2 * math.pi / (2 * grid.N)
    ) ** 2


@pytest.fixture(scope="session")
def default_grid():
    return build_grid(1.0, 0.9, 50, 45)


@pytest.fixture(scope="session")
def scalar_grid():
    return build_grid(1.0, 1.0, 2, 2)


@pytest.fixture(scope="session")
def small_grid():
    return build_grid(1.0, 0.9, 10, 9)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def default_branches(default_grid):
    """Gamma0 to Gamma3 on the default grid, shared by the detcont and acceptance tests."""
    from cqac.detcont import ContinuationSettings
    from cqac.workflows import compute_branches

    settings = ContinuationSettings(mu_min=-0.1, mu_max=4.0)
    return compute_branches(default_grid, settings, ["Gamma0", "Gamma1", "Gamma2", "Gamma3"])


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
