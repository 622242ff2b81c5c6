import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(number, title): acceptance criterion reported in the summary"
    )


@pytest.fixture
def detail(request):
    """Append a line of measured values to the criterion's summary entry."""
    lines = []
    request.node.user_properties.append(("detail", lines))
    return lines.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        number, title = marker.args
        lines = [ln for key, val in item.user_properties if key == "detail" for ln in val]
        _RESULTS[number] = (title, report.passed, lines)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, passed, lines = _RESULTS[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number} {status}: {title}")
        for line in lines:
            terminalreporter.write_line(f"    {line}")
