import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from quditgates import PlatformParams, build_model

settings.register_profile(
    "default", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def platform():
    """The ten-level operating point used throughout."""
    return PlatformParams()


@pytest.fixture(scope="session")
def model(platform):
    return build_model(platform)


@pytest.fixture(scope="session")
def toy3():
    return PlatformParams.toy(3, gamma_r=0.01)


@pytest.fixture(scope="session")
def toy4():
    return PlatformParams.toy(4)


def random_hermitian(rng, n):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (A + A.conj().T) / 2


def random_isometry(rng, n, k):
    A = rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))
    Q, _ = np.linalg.qr(A)
    return Q


def central_difference(f, x, h=1e-6):
    out = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (f(x + e) - f(x - e)) / (2 * h)
    return out


_CRITERIA = {}


@pytest.fixture(scope="session")
def record_criterion():
    """Store one verdict per acceptance criterion for the terminal summary."""
    def record(key, passed, detail):
        _CRITERIA[key] = (bool(passed), detail)
        return bool(passed)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key, (passed, detail) in _CRITERIA.items():
        terminalreporter.write_line(f"CRITERION {key}: {'PASS' if passed else 'FAIL'}  {detail}")
