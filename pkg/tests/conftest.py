import numpy as np
import pytest

from lumenpoint.pointcloud import PointCloud

_acceptance_lines: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def acceptance_log():
    return _acceptance_lines


def random_cloud(rng, n, scale=2.0):
    return PointCloud(rng.normal(scale=scale, size=(n, 3)), rng.uniform(0, 1, (n, 3)))


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
