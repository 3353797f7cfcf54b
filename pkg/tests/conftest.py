import numpy as np
import pytest

from nystrom3d.geometry import build_ellipsoid_atlas, build_sphere_atlas
from nystrom3d.kernels import KernelSplit, ScatteringParams

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def sphere():
    return build_sphere_atlas()


@pytest.fixture(scope="session")
def ellipsoid():
    return build_ellipsoid_atlas((1.0, 0.8, 0.6))


@pytest.fixture(scope="session")
def params():
    return ScatteringParams(1.0)


@pytest.fixture(scope="session")
def split(sphere, params):
    return KernelSplit(params, sphere.cutoff, sphere.delta0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
