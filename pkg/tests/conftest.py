"""Shared fixtures and the acceptance-summary hook."""

from __future__ import annotations

import pytest


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "acceptance(num, description): release criterion; summarized PASS/FAIL at the end",
    )


_ACCEPTANCE_RESULTS: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    num, description = marker.args
    _ACCEPTANCE_RESULTS[num] = (report.outcome.upper().replace("PASSED", "PASS").replace("FAILED", "FAIL"), description)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE_RESULTS):
        status, description = _ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(f"ACCEPTANCE {num} {status}: {description}")


@pytest.fixture
def micro_dataset():
    """The worked example: A observes {B, C, D}; first usages of tag t at
    B@1, C@2, A@4, D@5."""
    import tagcascade as tc

    return tc.build_dataset(
        [("A", "t", 4), ("B", "t", 1), ("C", "t", 2), ("D", "t", 5)],
        [("A", "B"), ("A", "C"), ("A", "D")],
    )
