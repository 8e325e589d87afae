from pathlib import Path

import pytest

from wheelleg.closed_loop import load_scenario, run_closed_loop
from wheelleg.model import load_model

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"

_runs = {}
_report = []


def scenario_path(name):
    return SCENARIOS / f"{name}.json"


def closed_loop_run(name):
    """Run a bundled scenario once per session (runs are deterministic)."""
    if name not in _runs:
        _runs[name] = run_closed_loop(load_scenario(scenario_path(name)))
    return _runs[name]


def report(criterion, passed, text):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {text}"
    _report.append(line)
    print(line)
    return passed


@pytest.fixture(scope="session")
def robot():
    return load_model()


@pytest.fixture
def run():
    return closed_loop_run


@pytest.fixture
def criterion():
    return report


def pytest_terminal_summary(terminalreporter):
    if _report:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_report, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
