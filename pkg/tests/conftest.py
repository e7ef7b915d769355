import time

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("suite")

SESSION = {"start": time.perf_counter(), "invariant": {}, "acceptance": []}


def pytest_collection_modifyitems(config, items):
    # the suite-level acceptance check has to see every other outcome first
    last = [it for it in items if it.get_closest_marker("run_last")]
    rest = [it for it in items if not it.get_closest_marker("run_last")]
    items[:] = rest + last


def pytest_configure(config):
    config.addinivalue_line("markers", "run_last: run after every other test")


def pytest_runtest_logreport(report):
    if "invariant" in report.keywords and (report.when == "call" or report.outcome != "passed"):
        prev = SESSION["invariant"].get(report.nodeid, "passed")
        SESSION["invariant"][report.nodeid] = report.outcome if prev == "passed" else prev


@pytest.fixture
def session_info():
    return SESSION


def pytest_terminal_summary(terminalreporter):
    lines = SESSION["acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
