import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from blip.bloch import ParameterGrid, build_dictionary, random_excitation

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = sorted(config.stash.get(_ACCEPTANCE_KEY, []))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok, detail in lines:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name} -- {detail}")


@pytest.fixture
def acceptance(request):
    """Record one acceptance line; call ``acceptance(number, name, ok, detail)``."""
    store = request.config.stash[_ACCEPTANCE_KEY]

    def record(number, name, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name} -- {detail}"
        print(line)
        store.append((number, name, bool(ok), detail))

    return record


@pytest.fixture(scope="session")
def small_grid():
    # 10 x 10 points, all feasible
    return ParameterGrid(t1=((200, 2000, 200),), t2=((20, 200, 20),))


@pytest.fixture(scope="session")
def small_dict(small_grid):
    return build_dictionary(small_grid, random_excitation(24, seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
