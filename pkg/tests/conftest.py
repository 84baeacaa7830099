
import pytest

_results: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    number, title = marker.args
    entry = _results.setdefault(number, {"title": title, "passed": True, "tests": []})
    if report.failed:
        entry["passed"] = False
    if report.when == "call" or report.failed:
        entry["tests"].append((item.name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        entry = _results[number]
        status = "PASS" if entry["passed"] else "FAIL"
        failed = [name for name, outcome in entry["tests"] if outcome == "failed"]
        suffix = f"  (failed: {', '.join(failed)})" if failed else ""
        terminalreporter.write_line(f"criterion {number:>2} {status}  {entry['title']}{suffix}")
