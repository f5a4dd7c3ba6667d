"""Collects the acceptance verdicts and prints them at the end of the run."""

import pytest

VERDICTS = {}


@pytest.fixture
def verdict():
    """Record ``(criterion, passed, detail)``; the test still asserts on its own."""
    def record(number, passed, detail):
        VERDICTS[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        passed, detail = VERDICTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
