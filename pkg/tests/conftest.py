import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def ring():
    from swarmopt.model import ring20

    return ring20()


@pytest.fixture
def two_state():
    from swarmopt.model import EnergyLandscape

    return EnergyLandscape.from_matrix([[-1.0, 1.0], [1.0, -1.0]], [0.5, 0.5], [0.0, 1.0])


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
