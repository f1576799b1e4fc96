import pytest

from chemofv.acceptance import Battery

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def battery():
    return Battery()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("C", 1)[1].split()[0])):
            terminalreporter.write_line(line)
