import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from spsansatz.state import SpsState

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def bell_state() -> SpsState:
    """(|00> + |11>)/sqrt(2) as two orthogonal branches."""
    theta = np.array([[0.0, np.pi / 2], [0.0, np.pi / 2]])
    return SpsState(np.full(2, 1 / np.sqrt(2)), theta)


def ghz_state(L: int) -> SpsState:
    theta = np.zeros((L, 2))
    theta[:, 1] = np.pi / 2
    return SpsState(np.full(2, 1 / np.sqrt(2)), theta)


def random_state(seed: int, L: int, M: int) -> SpsState:
    rng = np.random.default_rng(seed)
    return SpsState(rng.uniform(-1, 1, M), rng.uniform(-np.pi / 2, np.pi / 2, (L, M)))


@pytest.fixture
def bell():
    return bell_state()


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
