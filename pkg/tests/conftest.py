import os
from collections import OrderedDict

import pytest
from hypothesis import settings

settings.register_profile("ci", max_examples=50, deadline=None)
settings.register_profile("dev", max_examples=20, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

_CRITERIA = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "results": []})
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        entry["results"].append((item.name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        outcomes = [o for _, o in entry["results"]]
        status = "PASS" if outcomes and all(o == "passed" for o in outcomes) else "FAIL"
        failed = [n for n, o in entry["results"] if o != "passed"]
        suffix = f"  (failing: {', '.join(failed)})" if failed else ""
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {entry['title']}{suffix}")
