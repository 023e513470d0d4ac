import pytest

from cardiofem.ionic import MorrisLecarParams
from cardiofem.mesh import build_structured_mesh

REFERENCE_DOMAIN = (-1.25, 1.25)

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def params():
    return MorrisLecarParams()


@pytest.fixture(scope="session")
def reference_meshes():
    return {n: build_structured_mesh(*REFERENCE_DOMAIN, n) for n in (10, 20, 40)}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
