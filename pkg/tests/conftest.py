import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gpo.lie import exp_so3, log_so3

settings.register_profile("gpo", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("gpo")


def fd_jacobian(f, x, eps=1e-6):
    """Central differences of a vector function of a vector."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x), dtype=float)
    jac = np.empty((f0.size, x.size))
    for i in range(x.size):
        d = np.zeros_like(x)
        d[i] = eps
        jac[:, i] = (np.asarray(f(x + d)) - np.asarray(f(x - d))).reshape(-1) / (2 * eps)
    return jac


def fd_rotation(f, x, eps=1e-6):
    """Central differences of a rotation-valued function, expressed as a
    right perturbation of ``f(x)``."""
    x = np.asarray(x, dtype=float)
    c0 = f(x)
    jac = np.empty((3, x.size))
    for i in range(x.size):
        d = np.zeros_like(x)
        d[i] = eps
        jac[:, i] = (log_so3(c0.T @ f(x + d)) - log_so3(c0.T @ f(x - d))) / (2 * eps)
    return jac


def rel_err(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(np.linalg.norm(b), 1e-12)


def random_rotation(rng, max_angle=np.pi - 0.1):
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    return exp_so3(axis * rng.uniform(0.0, max_angle))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
