import numpy as np
import pytest

from treesent.autodiff import precision


@pytest.fixture
def double():
    """Run the test body in double precision."""
    with precision("double"):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_CRITERIA = {}
N_CRITERIA = 11


@pytest.fixture
def criterion():
    """Record one acceptance criterion outcome; printed in the terminal summary."""

    def record(number, passed, detail):
        _CRITERIA[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        if n in _CRITERIA:
            passed, detail = _CRITERIA[n]
            terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d}: NOT RUN")
