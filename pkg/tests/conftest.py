import pytest

_results = {}


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    name = marker.args[0]
    if call.when == "setup" and call.excinfo is not None:
        _results[name] = False
    elif call.when == "call":
        _results[name] = call.excinfo is None and _results.get(name, True)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok in _results.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}")
    passed = sum(_results.values())
    terminalreporter.write_line(f"{passed}/{len(_results)} criteria passed")
