import numpy as np
import pytest

from momlab import AtomicMeasure, Density, Grid, Potential

_ACCEPTANCE: list[tuple[int, bool, str]] = []


@pytest.fixture
def record():
    """Record one acceptance line: ``record(number, ok, detail)``."""
    def _record(number: int, ok: bool, detail: str) -> bool:
        _ACCEPTANCE.append((number, bool(ok), detail))
        print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def wide():
    return Grid(-8, 8, 4001)


@pytest.fixture(scope="session")
def gaussian(wide):
    return Density.from_function(wide, lambda x: np.exp(-x**2 / 2))


@pytest.fixture(scope="session")
def half_square(wide):
    return Potential.from_function(wide, lambda x: x**2 / 2)


@pytest.fixture(scope="session")
def two_atoms():
    return AtomicMeasure(np.array([-1.0, 1.0]), np.array([0.5, 0.5]))
