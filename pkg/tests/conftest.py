from __future__ import annotations

from pathlib import Path

import pytest

from vehinspect.routing import load_routing
from vehinspect.simulation import load_bundle, packaged_config

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = "PASS" if rep.outcome == "passed" else "FAIL"
        prev = _ACCEPTANCE.get(number)
        # a criterion with several tests passes only if all of them pass
        if prev is None or prev[0] == "PASS":
            _ACCEPTANCE[number] = (status, title)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, title = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{status}] criterion {number}: {title}")


@pytest.fixture(scope="session")
def table4():
    return load_routing(packaged_config("table4.cfg"))


@pytest.fixture(scope="session")
def table1():
    return load_routing(packaged_config("table1.cfg"))


@pytest.fixture(scope="session")
def bundle():
    return load_bundle()


@pytest.fixture(scope="session")
def configs_dir() -> Path:
    return packaged_config("default.yaml").parent
