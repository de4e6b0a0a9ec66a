import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_spd(rng, n, extra=3):
    b = rng.standard_normal((n, n + extra))
    return b @ b.T / (n + extra)


def random_lower(rng, n, lo=0.3, hi=3.0):
    l = np.tril(rng.standard_normal((n, n)))
    l[np.diag_indices(n)] = rng.uniform(lo, hi, n)
    return l


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
