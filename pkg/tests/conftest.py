import numpy as np
import pytest

from smearprop import Grid

_ACCEPTANCE_LINES = []


@pytest.fixture
def report_criterion():
    """Record one acceptance line; the lines are printed in the terminal summary."""

    def record(number, name, passed, measured, threshold, detail=""):
        tag = "PASS" if passed else "FAIL"
        line = f"[{tag}] criterion {number:>2} {name}: measured={measured:.3e} threshold={threshold:.3e}"
        if detail:
            line += f" ({detail})"
        _ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grid():
    return Grid.uniform(-40.0, 40.0, 4096)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
