import functools

import numpy as np
import pytest

from eggpack.experiments import make_test_case
from eggpack.model import PackingInstance, build_model
from eggpack.geometry import EggShape
from eggpack.solver import SolverConfig, multistart


def solved(key, starts=50, seed=0, fresh=False):
    """Multistart result for a named instance, shared across test modules.

    ``fresh=True`` bypasses the cache and solves again.
    """
    return (_solved.__wrapped__ if fresh else _solved)(key, starts, seed)


@functools.lru_cache(maxsize=None)
def _solved(key, starts, seed):
    if key == "two-circles":
        instance = PackingInstance(4, (EggShape(1, 1), EggShape(1, 1)))
    elif key.startswith("one-circle-"):
        r, m = key.split("-")[2:]
        instance = PackingInstance(int(m), (EggShape(float(r), float(r)),))
    else:
        case, n, m = (int(v) for v in key.split(":"))
        instance = make_test_case(case, n, m)
    problem = build_model(instance)
    return instance, problem, multistart(problem, instance, SolverConfig(starts=starts, seed=seed))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _ACCEPTANCE.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _ACCEPTANCE:
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}")
