"""Shared test configuration: one pass/fail line per acceptance criterion."""

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion covered by a test")


def pytest_collection_modifyitems(items):
    # attach the label at collection so setup failures are attributed too
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            item.user_properties.append(("criterion", mark.args[0]))


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    key = props["criterion"]
    if report.when == "call" or report.failed:
        _CRITERIA[key] = _CRITERIA.get(key, True) and not report.failed


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: int(k.split(".")[0])):
        terminalreporter.write_line(f"{'PASS' if _CRITERIA[key] else 'FAIL'}  {key}")
