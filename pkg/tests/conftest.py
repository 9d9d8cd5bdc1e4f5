from __future__ import annotations

import numpy as np
import pytest

from cmilab.rng import stream

ACCEPTANCE_SEED = 20240611
_criteria: dict[int, str] = {}


@pytest.fixture
def rng(request) -> np.random.Generator:
    """Per-test stream keyed on the test name, so tests do not share randomness."""
    return stream(ACCEPTANCE_SEED, request.node.name)


@pytest.fixture
def criterion():
    """Print and record one PASS/FAIL line, then assert."""

    def report(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _criteria[number] = line
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_criteria):
            terminalreporter.write_line(_criteria[k])
