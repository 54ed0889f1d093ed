import numpy as np
import pytest

# one line per acceptance criterion, filled in by test_acceptance.py
GATE_LINES: dict[int, str] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if GATE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(GATE_LINES):
            terminalreporter.write_line(GATE_LINES[n])
