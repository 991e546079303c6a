import numpy as np
import pytest

from polyclust.series import TimeSeries


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_series(seed: int, n: int, label: str = "") -> TimeSeries:
    return TimeSeries(np.random.default_rng(seed).normal(size=n), label=label)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
