import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.fixture
def detail(request):
    """Attach a short measurement string to the criterion summary line."""

    def add(text):
        request.node.user_properties.append(("detail", text))

    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not rep.failed:
        return
    n, title = mark.args
    prev = _RESULTS.get(n)
    ok = rep.passed and (prev is None or prev[1])
    notes = [v for k, v in item.user_properties if k == "detail"]
    _RESULTS[n] = (title, ok, "; ".join(notes))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_RESULTS):
        title, ok, note = _RESULTS[n]
        line = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}"
        tr.write_line(line + (f"  [{note}]" if note else ""))
