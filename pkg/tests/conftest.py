_criteria = {}
_outcomes = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark:
            _criteria[item.nodeid] = mark.args


def pytest_runtest_logreport(report):
    if report.nodeid not in _criteria:
        return
    failed = report.failed or (report.when == "call" and report.skipped)
    if failed or report.when == "call":
        prev = _outcomes.get(report.nodeid, True)
        _outcomes[report.nodeid] = prev and not failed


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    by_number = {}
    for nodeid, ok in _outcomes.items():
        number, title = _criteria[nodeid]
        prev = by_number.get(number, (title, True))
        by_number[number] = (title, prev[1] and ok)
    terminalreporter.section("acceptance criteria")
    for number in sorted(by_number):
        title, ok = by_number[number]
        terminalreporter.write_line(
            f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}")
