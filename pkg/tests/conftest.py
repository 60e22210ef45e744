import numpy as np
import pytest

from ellipticlab.mesh import build_box_mesh


@pytest.fixture
def unit2():
    return build_box_mesh((0, 0, 0), (1, 1, 1), (2, 2, 2))


@pytest.fixture
def unit4():
    return build_box_mesh((0, 0, 0), (1, 1, 1), (4, 4, 4))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
