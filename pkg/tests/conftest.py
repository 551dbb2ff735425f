"""Per-criterion pass/fail summary for the acceptance suite."""

import pytest

CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    report = outcome.get_result()
    number, title = mark.args
    ok = CRITERIA.get(number, (True, title))[0]
    # setup/teardown only count when they go wrong
    if report.when == "call" or not report.passed:
        ok = ok and report.passed
    CRITERIA[number] = (ok, title)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        ok, title = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}")
