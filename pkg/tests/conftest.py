import numpy as np
import pytest

from alrecycle.fem import TaylorHoodSpace, build_mesh


def random_sparse(rng, m, n, density, diag_shift=0.0):
    a = rng.standard_normal((m, n)) * (rng.random((m, n)) < density)
    if diag_shift:
        k = min(m, n)
        a[np.arange(k), np.arange(k)] += diag_shift
    return a


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def space8():
    return TaylorHoodSpace(build_mesh(8, 8))


@pytest.fixture(scope="session")
def space16():
    return TaylorHoodSpace(build_mesh(16, 16))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[key])
