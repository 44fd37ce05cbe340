import numpy as np
import pytest

from midframe._backend import available_backends, use_backend

_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(params=available_backends())
def backend(request):
    """Run the test once per kernel backend."""
    with use_backend(request.param):
        yield request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance_log(request):
    """Append ``(criterion, passed, detail)``; lines are printed in the terminal summary."""
    return request.config.stash[_ACCEPTANCE_KEY]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = config.stash.get(_ACCEPTANCE_KEY, [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(rows, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
