import numpy as np
import pytest

from fkdvlab.ground_state import petviashvili_solve
from fkdvlab.params import ModelParams
from fkdvlab.spectral import make_grid


@pytest.fixture(scope="session")
def kdv_gs():
    """alpha = 2, m = 2 ground state, exactly 3 sech^2(x/2)."""
    return petviashvili_solve(ModelParams(1, 2.0, 2), make_grid(1, 80.0, 512))


@pytest.fixture(scope="session")
def bo_gs():
    """alpha = 1, m = 2 ground state, close to 4/(1 + x^2) on a moderate box."""
    return petviashvili_solve(ModelParams(1, 1.0, 2), make_grid(1, 400.0, 4096))


@pytest.fixture(scope="session")
def gs_114():
    return petviashvili_solve(ModelParams(1, 1.0, 4), make_grid(1, 100.0, 8192))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(mod.format_line(n))
