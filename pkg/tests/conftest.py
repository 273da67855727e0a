import re

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2))
    if report.when == "call" or report.skipped:
        status = "PASS" if report.passed else "SKIP" if report.skipped else "FAIL"
        if _ACCEPTANCE.get(key) != "FAIL":
            _ACCEPTANCE[key] = status
    elif report.failed:
        _ACCEPTANCE[key] = "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (n, name), status in sorted(_ACCEPTANCE.items()):
        terminalreporter.write_line(f"criterion {n:2d} {name.replace('_', ' '):<40} {status}")
