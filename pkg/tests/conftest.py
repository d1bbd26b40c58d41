import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from polywind.grid import GridSpec


@pytest.fixture
def small_spec():
    """Cheap grid for module-level checks (dev scale, not acceptance scale)."""
    return GridSpec(points_per_unit=32, steps_per_unit=150, winding_blocks=3)


@pytest.fixture
def rng():
    return np.random.default_rng(20260822)


# Full-scale acceptance tests append one "PASS/FAIL <check>: <detail>" line
# each; the hook reprints them after the run so the verdicts survive output
# capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance report")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
