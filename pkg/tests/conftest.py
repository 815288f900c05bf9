import numpy as np
import pytest

from hamreeb.catalog import named_field, named_form, named_surface
from hamreeb.fields import find_critical_points
from hamreeb.reeb import build_reeb_graph, mesh_for_field

# lines recorded by test_acceptance, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def disk():
    return named_surface("disk")


@pytest.fixture(scope="session")
def twowell_domain():
    return named_surface("twowell-domain")


@pytest.fixture(scope="session")
def r2():
    return named_field("r2")


@pytest.fixture(scope="session")
def twowell():
    return named_field("twowell")


def _graph(surface, f, h=0.04):
    crit = find_critical_points(f, surface)
    return build_reeb_graph(mesh_for_field(surface, f, crit, h, 0), crit, f)


@pytest.fixture(scope="session")
def disk_graph(disk, r2):
    return _graph(disk, r2)


@pytest.fixture(scope="session")
def twowell_graph(twowell_domain, twowell):
    return _graph(twowell_domain, twowell)


@pytest.fixture(scope="session")
def standard_disk_form(disk):
    return named_form(disk, "standard")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
