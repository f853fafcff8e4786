import os
import random

import pytest
from hypothesis import HealthCheck, settings

from ridematch.ch import build_ch
from ridematch.synthetic import chain_graph, grid_graph, random_graph

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

A, B, C, D = range(4)


@pytest.fixture(scope="session")
def chain4():
    """A - B - C - D, unit weights, both directions."""
    return chain_graph(4)


@pytest.fixture(scope="session")
def chain4_ch(chain4):
    return build_ch(chain4)


@pytest.fixture(scope="session")
def random200():
    return random_graph(200, avg_degree=3.0, seed=7, max_weight=50)


@pytest.fixture(scope="session")
def random200_ch(random200):
    return build_ch(random200)


@pytest.fixture(scope="session")
def grid_small():
    return grid_graph(20, 20, seed=3, arterial_every=5)


@pytest.fixture(scope="session")
def grid_small_ch(grid_small):
    return build_ch(grid_small)


@pytest.fixture
def rng():
    return random.Random(12345)


# -- acceptance reporting: one pass/fail line per criterion

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): exit criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE[number] = (title, report.outcome, getattr(item, "acceptance_detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, outcome, detail = _ACCEPTANCE[number]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        line = f"[{verdict}] {number}. {title}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)
