from __future__ import annotations

from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"

_criteria: dict[str, dict] = {}


@pytest.fixture
def data_dir() -> Path:
    return DATA


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = getattr(report, "_criterion", None)
    if marker is None:
        return
    number, text = marker
    entry = _criteria.setdefault(number, {"text": text, "passed": 0, "failed": 0})
    entry["passed" if report.passed else "failed"] += 1


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report._criterion = (str(marker.args[0]), marker.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria, key=lambda n: int(n)):
        entry = _criteria[number]
        status = "PASS" if entry["failed"] == 0 else "FAIL"
        checks = entry["passed"] + entry["failed"]
        terminalreporter.write_line(
            f"criterion {number}: {status}  ({entry['passed']}/{checks} checks)  {entry['text']}"
        )
