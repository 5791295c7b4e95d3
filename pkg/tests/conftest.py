import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bosemf.fock import ModeBasis
from bosemf.grid import make_grid

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def grid():
    return make_grid(2 * math.pi, 32)


@pytest.fixture
def modes4(grid):
    return ModeBasis(grid, 4)


def unit_vector(rng, K):
    v = rng.normal(size=K) + 1j * rng.normal(size=K)
    return v / np.linalg.norm(v)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    """Record one PASS/FAIL line per acceptance criterion; shown in the terminal summary."""
    def report(number: int, ok: bool, detail: str):
        line = f"ACCEPTANCE {number:>2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
