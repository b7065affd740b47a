"""Shared test configuration: per-criterion summary lines for the acceptance gate."""

import pytest

_results: dict[tuple[str, str], list[bool]] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(number, title): tags a test as covering one shipping criterion",
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    _results.setdefault((str(number), title), []).append(report.passed)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number, title in sorted(_results, key=lambda key: int(key[0])):
        passed = all(_results[(number, title)])
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[PRIMARY {number}] {status} - {title}")
