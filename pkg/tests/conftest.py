import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_LINES = []


def record_criterion(label: str, passed: bool, detail: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'}  {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def worker_count() -> int:
    return max(1, min(os.cpu_count() or 1, 8))


@pytest.fixture(scope="session")
def scenario_400():
    """N = 400 design shared by several acceptance criteria."""
    from geoselect.simulation import ScenarioSpec, run_scenario

    spec = ScenarioSpec(side=10, reps=100, seed=1, methods=("OSE", "OSE_Alt3", "MLE", "MLE_T"))
    return run_scenario(spec, workers=worker_count())


@pytest.fixture(scope="session")
def scenario_100():
    from geoselect.simulation import ScenarioSpec, run_scenario

    spec = ScenarioSpec(side=5, reps=100, seed=1, methods=("OSE", "OSE_Alt1"))
    return run_scenario(spec, workers=worker_count())


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
