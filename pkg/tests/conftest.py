import numpy as np
import pytest

from sesop.linop import DenseOperator

# acceptance lines collected during the session, echoed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def report():
    def _report(criterion: int, passed: bool, detail: str):
        ACCEPTANCE_LINES.append((criterion, passed, detail))
        print(f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'} - {detail}")

    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE_LINES, key=lambda t: t[0]):
        terminalreporter.write_line(f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'} - {detail}")


def random_system(seed, m, n):
    r = np.random.default_rng(seed)
    return DenseOperator(r.uniform(-1, 1, (m, n))), r


def fd_gradient(f, t, h=1e-6):
    t = np.asarray(t, dtype=float)
    g = np.zeros_like(t)
    for i in range(t.size):
        e = np.zeros_like(t)
        e[i] = h
        g[i] = (f(t + e) - f(t - e)) / (2 * h)
    return g
