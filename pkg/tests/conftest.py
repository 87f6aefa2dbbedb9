from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=30, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixture_data():
    def load(name: str) -> dict:
        return json.loads((FIXTURES / name).read_text())

    return load


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_line():
    """Record one pass/fail line per acceptance criterion (printed at the end)."""

    def record(number: int, title: str, passed: bool, detail: str, seconds: float, budget: float):
        within = seconds <= budget
        status = "PASS" if passed and within else "FAIL"
        line = f"criterion {number:2d} {status}  {title}: {detail} [{seconds:.1f}s / budget {budget:.0f}s]"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed and within

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
