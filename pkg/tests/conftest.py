import sys
import time
from pathlib import Path

import pytest

# make the test-only helpers (oracles, simstudy) importable as plain modules
sys.path.insert(0, str(Path(__file__).parent))

import simstudy  # noqa: E402

# (criterion number, passed, detail) lines collected by the acceptance suite
ACCEPTANCE_LINES: list[tuple[int, bool, str]] = []


@pytest.fixture(scope="session")
def recovery():
    """200 replications at 50-pair scale, shared by every test that needs
    coverage or Wald-size numbers."""
    t0 = time.perf_counter()
    study = simstudy.recovery_study(reps=200)
    study.elapsed = time.perf_counter() - t0
    return study


@pytest.fixture(scope="session")
def calibrated_replication():
    """Ten 100-participant sessions with the calibrated roster, five per
    treatment order."""
    from infoshare.replication import replicate
    t0 = time.perf_counter()
    rep = replicate(seed=42, sessions_per_order=5, participants=100)
    rep.elapsed = time.perf_counter() - t0
    return rep


@pytest.fixture
def criterion():
    """Record one acceptance line; the terminal summary prints them all."""
    def record(number: int, passed: bool, detail: str) -> bool:
        line = (number, bool(passed), detail)
        ACCEPTANCE_LINES.append(line)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_LINES,
                                         key=lambda x: x[0]):
        terminalreporter.write_line(
            f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
