import numpy as np
import pytest

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str, str]] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def criterion():
    """Record one acceptance criterion's verdict for the end-of-run table."""
    def record(number: int, title: str, passed: bool, detail: str = ""):
        ACCEPTANCE_RESULTS[number] = (bool(passed), title, detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, title, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(
            f"{'PASS' if passed else 'FAIL'}  {number:>2}. {title}" + (f"  [{detail}]" if detail else ""))
