import pytest

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): one numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    # a criterion may span several tests; any failing phase fails it
    if report.failed or (report.when == "call" and report.skipped):
        _ACCEPTANCE[number] = ("FAIL", title)
    elif report.when == "call":
        _ACCEPTANCE.setdefault(number, ("PASS", title))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, title = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {title}")
