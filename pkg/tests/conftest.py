import numpy as np
import pytest

from stokes_shape.config import DESK_MESH
from stokes_shape.mesh import channel_mesh

_CRITERIA = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def coarse_mesh():
    """Small symmetric channel mesh for fast unit tests."""
    return channel_mesh(n_obstacle=48, h_max=0.8, grading=0.4, symmetric=True)


@pytest.fixture(scope="session")
def desk_mesh():
    return channel_mesh(**DESK_MESH)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def report(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash.setdefault(_CRITERIA, [])

    def emit(label, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  criterion {label}: {detail}"
        lines.append(line)
        print(line)
        return passed

    return emit


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
