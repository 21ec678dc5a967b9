import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kgtrig.integrators import State  # noqa: E402
from kgtrig.problems import Problem, catalogue, rough_data, smooth_data  # noqa: E402
from kgtrig.spectral import TorusGrid  # noqa: E402

# criterion number -> (passed, detail); filled by test_acceptance, printed at the end
CRITERIA: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        ok, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def grid64():
    return TorusGrid(1, 64)


@pytest.fixture
def sine64(grid64):
    return Problem(grid64, catalogue("sine"), rho=0.0)


@pytest.fixture
def rough_state64(grid64):
    data = rough_data(2.0, 5, grid64)
    return State(0.0, data.u0, data.v0)


@pytest.fixture
def smooth_state(grid64):
    data = smooth_data(grid64)
    return State(0.0, data.u0, data.v0)
