import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", deadline=None, max_examples=100,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

# Filled by tests/test_acceptance.py and echoed in the terminal summary.
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture(scope="session")
def repro_dir(tmp_path_factory):
    """One full ``follower repro --seed 42`` run shared by the slow tests."""
    from follower import cli

    out = tmp_path_factory.mktemp("repro42")
    assert cli.main(["repro", "--seed", "42", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="session")
def seed42_bundle(repro_dir):
    from follower.planner import PlannerBundle

    return PlannerBundle.load(repro_dir / "model.json")


@pytest.fixture(scope="session")
def seed42_dataset(repro_dir):
    from follower.planner import DemoDataset

    return DemoDataset.from_csv(repro_dir / "dataset.csv")


@pytest.fixture(scope="session")
def acceptance_report():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        assert ok, line

    return record
