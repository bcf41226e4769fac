import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

# filled by tests/test_acceptance.py, one entry per criterion
ACCEPTANCE_LINES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
