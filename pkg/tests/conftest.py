import os

import pytest
from hypothesis import HealthCheck, settings

from kml.spectral import cached_model

settings.register_profile("kml", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "kml"))


@pytest.fixture(scope="session")
def model64():
    return cached_model(1.0, 1, 64)


@pytest.fixture(scope="session")
def model96():
    return cached_model(1.0, 1, 96)


@pytest.fixture(scope="session")
def hp_model():
    """Multiprecision model resolving ~25 eigenpairs, cheap enough for unit tests."""
    return cached_model(1.0, 1, 48, 50)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
