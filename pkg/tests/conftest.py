"""Shared fixtures: kernel warmup and the acceptance-criteria summary."""

import pytest

from drift_adapt import _kernels

# One line per acceptance criterion, echoed after the test summary so the
# pass/fail verdicts are visible in the terminal report.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the numba kernels once so timed tests measure runtime, not JIT."""
    _kernels.warm_up()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
