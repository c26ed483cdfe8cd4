import numpy as np
import pytest

from statdisk.geometry import Ball, DeformationPath, random_generator, standard_structure
from statdisk.rhsolver import SolverOptions, solve_stationary_center


@pytest.fixture(scope="session")
def ball2():
    return Ball(2)


@pytest.fixture(scope="session")
def std2():
    return standard_structure(2)


@pytest.fixture(scope="session")
def path2():
    return DeformationPath(random_generator(2, seed=0, scale=1.0), 2)


@pytest.fixture(scope="session")
def opts64():
    return SolverOptions(N=64, M=16)


@pytest.fixture(scope="session")
def center_disk(ball2, std2, opts64):
    return solve_stationary_center(ball2, std2, np.zeros(4), np.eye(4)[0], opts=opts64)


@pytest.fixture(scope="session")
def deformed_disk(ball2, path2, center_disk, opts64):
    J = path2.at(0.02)
    return J, solve_stationary_center(ball2, J, np.zeros(4), np.eye(4)[0], initial=center_disk, opts=opts64)


VERDICTS = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion and assert on it."""

    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        print(line)
        VERDICTS.append(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
