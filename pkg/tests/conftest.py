import sys
from pathlib import Path

import pytest

# Lets test modules import the oracle helpers as a plain module.
sys.path.insert(0, str(Path(__file__).parent))

from adtvlc.scenario import ScenarioConfig, Simulation  # noqa: E402


@pytest.fixture(scope="session")
def default_sim():
    return Simulation(ScenarioConfig())


@pytest.fixture(scope="session")
def proposed_result(default_sim):
    return default_sim.run_proposed(threads=1)


@pytest.fixture(scope="session")
def baseline_result(default_sim):
    return default_sim.run_baseline(threads=1)


_ACCEPTANCE: dict[str, str] = {}


@pytest.fixture
def acceptance():
    """Record one summary line per acceptance criterion, then assert it."""

    def record(key: str, ok: bool, detail: str) -> None:
        _ACCEPTANCE[key] = f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}"
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=lambda k: [int(p) for p in k.split(".")]):
        terminalreporter.write_line(_ACCEPTANCE[key])
