import os

import pytest

RESULTS: list[tuple[str, bool, str]] = []


def pytest_addoption(parser):
    parser.addoption("--full", action="store_true", default=False,
                     help="run the full-scale slow suite (hours)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--full") or os.environ.get("RISLOC_FULL") == "1":
        return
    skip = pytest.mark.skip(reason="full-scale run; enable with --full or RISLOC_FULL=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def report():
    """Record one acceptance verdict; printed again in the terminal summary."""

    def _report(name: str, passed: bool, detail: str):
        line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
        print(line)
        RESULTS.append((name, passed, detail))
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
