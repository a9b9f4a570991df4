import numpy as np
import pytest
from hypothesis import settings

from klab.geometry import euclidean, hyperbolic
from klab.modes import SolveConfig, solve_modes
from klab.potential import free

settings.register_profile("klab", deadline=None, max_examples=50)
settings.load_profile("klab")


@pytest.fixture(scope="session")
def h3():
    return hyperbolic(3, r0=1.0, r_max=40.0)


@pytest.fixture(scope="session")
def h3_modes(h3):
    cfg = SolveConfig(lam=1.5, r_start=1.0, r_end=40.0, l_max=2)
    return solve_modes(h3, free(1.0, 40.0), cfg)


@pytest.fixture(scope="session")
def e3():
    return euclidean(3, r0=1.0, r_max=50.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


@pytest.fixture
def criterion(request, capsys):
    """Record one acceptance line; it is echoed live and repeated in the terminal summary."""
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number}: {detail}"
        request.config.stash[ACCEPTANCE_KEY].append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
