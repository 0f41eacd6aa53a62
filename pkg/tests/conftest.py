import numpy as np
import pytest

from qhdlab.madelung import PressureLaw
from qhdlab.spectral import TorusGrid

ACCEPTANCE_RESULTS: list[tuple[int, bool, str]] = []


def report_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS.append((number, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def grid64():
    return TorusGrid(64, 64)


@pytest.fixture(scope="session")
def grid32():
    return TorusGrid(32, 32)


@pytest.fixture(scope="session")
def law():
    return PressureLaw(1, 1.0)


def band_limited(grid, rng, band=4, amplitude=1.0):
    """Random real trigonometric polynomial with zero mean and sup norm ``amplitude``."""
    x1, x2 = grid.coords()
    u = np.zeros(grid.shape)
    for j1 in range(0, band + 1):
        for j2 in range(-band, band + 1):
            if j1 == 0 and j2 <= 0:
                continue
            u += rng.standard_normal() * np.cos(2 * np.pi * (j1 * x1 + j2 * x2) + rng.uniform(0, 2 * np.pi))
    u -= np.mean(u)
    return amplitude * u / np.max(np.abs(u))
