"""Prints one PASS/FAIL line per acceptance criterion at session end."""
import re

_results = {}


def pytest_runtest_logreport(report):
    m = re.match(r".*test_criterion_(\d+)", report.nodeid)
    if m and report.when == "call":
        _results[int(m.group(1))] = (report.outcome, report.nodeid)
    elif m and report.when == "setup" and report.outcome != "passed":
        _results[int(m.group(1))] = (report.outcome, report.nodeid)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(_results):
        outcome, nodeid = _results[num]
        status = "PASS" if outcome == "passed" else "FAIL"
        name = nodeid.split("::")[-1]
        terminalreporter.write_line(f"criterion {num}: {status}  ({name})")
