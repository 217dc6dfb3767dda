import math

import pytest
from hypothesis import settings

from backaction_maser.model import default_device

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")

TWO_PI = 2 * math.pi

# filled by tests/test_acceptance.py, printed once at the end of the session
ACCEPTANCE_LINES = []


@pytest.fixture
def device():
    return default_device()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
