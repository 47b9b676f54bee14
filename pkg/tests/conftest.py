import numpy as np
import pytest

from convint.grid_fields import Grid2, ScalarField, SymMatrixField, VectorField


def trig_poly(grid, rng, modes=3, amp=1.0):
    """Random real trigonometric polynomial with wavenumbers up to ``modes``
    (in units of the torus fundamental)."""
    X1, X2 = grid.mesh
    L1, L2 = grid.period
    out = np.zeros(grid.shape)
    for p in range(-modes, modes + 1):
        for q in range(0, modes + 1):
            c, s = rng.normal(size=2) / (1 + p * p + q * q)
            ph = 2 * np.pi * (p * X1 / L1 + q * X2 / L2)
            out += c * np.cos(ph) + s * np.sin(ph)
    return amp * out / max(np.max(np.abs(out)), 1e-300)


def random_scalar(grid, rng, modes=3, amp=1.0):
    return ScalarField(grid, trig_poly(grid, rng, modes, amp))


def random_vector(grid, rng, k, modes=3, amp=1.0):
    return VectorField(grid, np.stack([trig_poly(grid, rng, modes, amp) for _ in range(k)]))


def random_sym(grid, rng, modes=3, amp=1.0):
    return SymMatrixField(grid, *(trig_poly(grid, rng, modes, amp) for _ in range(3)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def torus64():
    return Grid2.torus(64)


@pytest.fixture(scope="session")
def torus128():
    return Grid2.torus(128)


# acceptance lines, one per criterion, echoed after the run
ACCEPTANCE = {}


def record_criterion(num, ok, detail):
    line = f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[num] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for num in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[num])
