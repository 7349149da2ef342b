import os
import re
import sys

sys.path.insert(0, os.path.dirname(__file__))

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")
_results = {}


def pytest_runtest_logreport(report):
    match = _CRITERION.search(report.nodeid)
    if not match:
        return
    key = (int(match.group(1)), match.group(2))
    failed = report.failed or (report.when == "call" and report.skipped)
    if failed or key not in _results:
        _results[key] = "FAIL" if failed else _results.get(key, "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for (number, name), outcome in sorted(_results.items()):
        terminalreporter.write_line(f"criterion {number:2d} {name.replace('_', ' ')}: {outcome}")
