import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "homvar", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("homvar")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_matrix(rng, d):
    return rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))


# one line per acceptance criterion, shown after the run even under capture
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
