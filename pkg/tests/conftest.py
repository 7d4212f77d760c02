import re

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_([a-z0-9_]+)")

_results = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if m is None:
        return
    key = (int(m.group(1)), m.group(2))
    if report.when == "call":
        _results[key] = report.outcome
    elif report.outcome != "passed":
        # setup/teardown error or skip: still surface a verdict line
        _results.setdefault(key, report.outcome)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for num, label in sorted(_results):
        outcome = _results[(num, label)]
        verdict = "PASS" if outcome == "passed" else f"FAIL ({outcome})"
        terminalreporter.write_line(
            f"criterion {num} ({label.replace('_', ' ')}): {verdict}"
        )
