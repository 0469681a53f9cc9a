from __future__ import annotations

import pytest

# criterion number -> list of (check description, outcome)
_CRITERIA: dict[int, list[tuple[str, str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, text = mark.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        if hasattr(rep, "wasxfail"):
            state = "expected failure" if rep.skipped else "unexpected pass"
        else:
            state = rep.outcome
        _CRITERIA.setdefault(number, []).append((text, state))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        checks = _CRITERIA[number]
        failed = [(t, s) for t, s in checks if s != "passed"]
        if not failed:
            terminalreporter.write_line(f"criterion {number}: PASS ({'; '.join(t for t, _ in checks)})")
        else:
            detail = "; ".join(f"{t} [{s}]" for t, s in failed)
            passed = len(checks) - len(failed)
            terminalreporter.write_line(f"criterion {number}: FAIL ({detail}; {passed} other checks passed)")
