import numpy as np
import pytest

from rsftrace.graph import complete_graph, gen_grid2d, path_graph, star_graph

_ACCEPTANCE = []


@pytest.fixture
def p2():
    return path_graph(2)


@pytest.fixture
def triangle():
    return complete_graph(3)


@pytest.fixture
def star9():
    return star_graph(9)


@pytest.fixture(scope="session")
def grid20():
    return gen_grid2d(20)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def report():
    """Record one acceptance line: ``report(criterion, passed, detail)``."""
    def _report(criterion, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed
    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
