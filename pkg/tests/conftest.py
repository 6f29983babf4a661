"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""

from __future__ import annotations

import time

import pytest

SUITE_BUDGET_SECONDS = 60.0

_results: dict[str, tuple[str, bool]] = {}
_started = time.monotonic()


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(label): acceptance criterion implemented by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    key, title = marker.args
    ok = report.passed if report.when == "call" else not report.failed
    prev_title, prev_ok = _results.get(key, (title, True))
    _results[key] = (prev_title, prev_ok and ok)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    elapsed = time.monotonic() - _started
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key in sorted(_results, key=lambda k: int(k[2:])):
        title, ok = _results[key]
        tr.write_line(f"{'PASS' if ok else 'FAIL'} {key} {title}")
    within = elapsed < SUITE_BUDGET_SECONDS
    tr.write_line(f"{'PASS' if within else 'FAIL'} suite wall time {elapsed:.1f} s (budget {SUITE_BUDGET_SECONDS:.0f} s)")
