"""Shared test fixtures and the acceptance-criteria summary hook."""

import pytest


class AcceptanceLog:
    """Collects one verdict line per acceptance criterion.

    Lines are printed immediately (so they show up interleaved with -v
    output) and repeated in a dedicated section at the end of the run.
    """

    def __init__(self):
        self.lines = []

    def add(self, line):
        self.lines.append(line)
        print(line)


_LOG = AcceptanceLog()


@pytest.fixture(scope="session")
def acceptance_log():
    return _LOG


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _LOG.lines:
        terminalreporter.section("acceptance criteria")
        for line in _LOG.lines:
            terminalreporter.write_line(line)
