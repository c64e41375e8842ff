import re
from functools import lru_cache

import pytest
from hypothesis import HealthCheck, settings

from ivl.examples import build_example

settings.register_profile(
    "ivl",
    max_examples=1000,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large, HealthCheck.filter_too_much],
)
settings.load_profile("ivl")


@lru_cache(maxsize=None)
def example(eid):
    return build_example(eid)


@lru_cache(maxsize=None)
def corpus():
    """The preset corpus run, shared by every test in the session."""
    from ivl.corpus import run_corpus

    return run_corpus(jobs=1)


@pytest.fixture
def a1():
    return example("A1")


@pytest.fixture
def a2():
    return example("A2")


@pytest.fixture
def a3():
    return example("A3")


@pytest.fixture
def a4():
    return example("A4")


@pytest.fixture
def a5():
    return example("A5")


# one pass/fail line per acceptance criterion at the end of the run

_CRITERION = re.compile(r"test_criterion_(\d+)(\w*)")
_results: dict = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _results[report.nodeid] = (int(m.group(1)), m.group(2).strip("_"), report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, (n, name, outcome) in sorted(_results.items(), key=lambda kv: (kv[1][0], kv[0])):
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {mark}  {name.replace('_', ' ')}")
