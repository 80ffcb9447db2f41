import sys
import time

import numpy as np
import pytest

from resilient_optsim import engine, scenario


@pytest.fixture(scope="session")
def robot_run():
    start = time.perf_counter()
    trace = engine.run(scenario.robot_team(attacks=True, horizon=80.0, dt=1e-3, seed=0))
    return trace, time.perf_counter() - start


@pytest.fixture(scope="session")
def robot_trace(robot_run):
    return robot_run[0]


@pytest.fixture(scope="session")
def robot_metrics(robot_trace):
    return engine.metrics(robot_trace)


@pytest.fixture(scope="session")
def quiet_trace():
    return engine.run(scenario.robot_team(attacks=False, horizon=80.0, dt=1e-3, seed=0))


@pytest.fixture(scope="session")
def integrator_trace():
    return engine.run(scenario.from_dict(scenario.two_integrators_dict()))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line[1])
