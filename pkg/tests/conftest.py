import pytest

_lines: dict[int, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when != "call":
        return
    number = marker.args[0]
    props = dict(report.user_properties)
    status = "PASS" if report.passed else "FAIL"
    detail = props.get("detail", "")
    _lines[number] = f"[{status}] {number:2d}. {item.name[5:].replace('_', ' ')}" + (f": {detail}" if detail else "")
    print(f"\n{_lines[number]}")


def pytest_terminal_summary(terminalreporter):
    if _lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_lines):
            terminalreporter.write_line(_lines[number])
