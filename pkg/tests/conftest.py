import pytest

# criterion label -> (status, detail), filled from test reports of tests
# marked with @pytest.mark.criterion("...")
CRITERIA = {}
DETAILS = {}


@pytest.fixture
def note(request):
    """Attach a short measured-value summary to the criterion line."""
    def _note(text):
        DETAILS[request.node.nodeid] = text
    return _note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    label = marker.args[0]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        prev = CRITERIA.get(label, ("PASS", ""))[0]
        if prev != "PASS" and status == "PASS":
            status = prev
        CRITERIA[label] = (status, DETAILS.get(item.nodeid, ""))


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(CRITERIA, key=lambda s: int(s.split(".")[0])):
        status, detail = CRITERIA[label]
        line = f"{status}  {label}"
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)
