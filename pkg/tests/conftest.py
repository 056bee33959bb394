import numpy as np
import pytest

from adaptive_lqr.dare import DareError, solve_dare
from adaptive_lqr.plant import QuadrotorParams, quadrotor_parametrization


@pytest.fixture(scope="session")
def quad_par():
    return quadrotor_parametrization(QuadrotorParams())


@pytest.fixture(scope="session")
def quad_weights():
    return np.eye(6), 10.0 * np.eye(2)


def random_stabilizable_systems(count, seed=1234, max_n=4, max_m=2):
    """Random (A, B, Q, R) with n <= max_n, m <= max_m for which the DARE solves."""
    rng = np.random.default_rng(seed)
    systems = []
    while len(systems) < count:
        n = int(rng.integers(1, max_n + 1))
        m = int(rng.integers(1, max_m + 1))
        A = rng.normal(size=(n, n))
        B = rng.normal(size=(n, m))
        L = rng.normal(size=(n, n))
        Q = L @ L.T + 0.5 * np.eye(n)
        R = np.diag(rng.uniform(0.5, 2.0, size=m))
        try:
            solve_dare(A, B, Q, R)
        except DareError:
            continue
        systems.append((A, B, Q, R))
    return systems


_criteria = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _criteria[report.nodeid.split("::")[-1]] = (report.passed, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria, key=lambda s: int(s.split("_")[2])):
        passed, duration = _criteria[name]
        number = name.split("_")[2]
        label = " ".join(name.split("_")[3:])
        terminalreporter.write_line(
            f"criterion {number}: {'PASS' if passed else 'FAIL'}  ({label}, {duration:.1f}s)")
