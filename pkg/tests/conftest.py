"""Shared test plumbing: acceptance criterion verdict lines.

Acceptance tests record one human-readable line per criterion; the lines
are printed as a block after the run so the verdicts are visible without
digging through individual test output.
"""

import pytest

_CRITERION_LINES = []


@pytest.fixture(scope="session")
def record_criterion():
    def _record(line: str) -> None:
        _CRITERION_LINES.append(line)
    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _CRITERION_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in _CRITERION_LINES:
            terminalreporter.write_line(line)
