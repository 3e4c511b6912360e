import numpy as np
import pytest

from segpart.catalog import entry
from segpart.sphere import build_icosphere_mesh, build_transports

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def dihedral2_small():
    e = entry("dihedral2d(2)")
    return e.make(e.build_mesh(n=256))


@pytest.fixture(scope="session")
def dihedral1_small():
    e = entry("dihedral2d(1)")
    return e.make(e.build_mesh(n=256))


@pytest.fixture(scope="session")
def xyz_small():
    e = entry("xyz_r3")
    mesh = build_transports(build_icosphere_mesh(3, "octahedron"), e.group())
    return e.make(mesh)


@pytest.fixture(scope="session")
def xyz_default():
    return entry("xyz_r3").make()


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
