import numpy as np
import pytest

from ddspde.grid import build_grid, sample_function

_CRITERIA: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance-criterion verdict; the summary prints them all."""

    def record(name: str, passed: bool, detail: str = "") -> bool:
        _CRITERIA.append((name, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _CRITERIA:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {name}  {detail}")


def psi(k1, k2):
    return lambda x1, x2: 2.0 * np.sin(k1 * np.pi * x1) * np.sin(k2 * np.pi * x2)


def discrete_lambda(n, k1=1, k2=1):
    """Closed-form eigenvalue of the 5-point Dirichlet Laplacian for mode (k1, k2)."""
    dx = 1.0 / (n + 1)
    return 4.0 / dx**2 * (np.sin(k1 * np.pi * dx / 2) ** 2 + np.sin(k2 * np.pi * dx / 2) ** 2)


def dense_laplacian(n):
    """Independent dense 5-point Laplacian, row-major (i1, i2) ordering."""
    dx = 1.0 / (n + 1)
    A = np.zeros((n * n, n * n))
    for i in range(n):
        for j in range(n):
            r = i * n + j
            A[r, r] = 4.0
            for a, b in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
                if 0 <= a < n and 0 <= b < n:
                    A[r, a * n + b] = -1.0
    return A / dx**2


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid3():
    return build_grid(3)


def psi_field(g, k1=1, k2=1):
    return sample_function(g, psi(k1, k2))
