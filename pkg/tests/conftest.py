"""Collects the acceptance suite's per-criterion lines into the run summary."""

_criteria = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    for line in report.capstdout.splitlines():
        if line.startswith("criterion "):
            _criteria[line.split(":")[0]] = line


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_criteria, key=lambda k: int(k.split()[1])):
        terminalreporter.write_line(_criteria[key])
