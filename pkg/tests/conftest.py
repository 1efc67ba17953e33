import numpy as np
import pytest

from scalewalk.generators import gen_grid

ACCEPTANCE_RESULTS = []


@pytest.fixture(scope="session")
def grid8():
    return gen_grid(8)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num:2d} {name}: {detail}")


def rng(seed=0):
    return np.random.default_rng(seed)
