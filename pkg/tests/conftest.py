import pytest

from flashpim.config import FlashTopology, TechParams

ACCEPTANCE = []


@pytest.fixture(scope="session")
def tech():
    return TechParams.default()


@pytest.fixture(scope="session")
def topo():
    return FlashTopology.default()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE:
        terminalreporter.write_line(line)
