import numpy as np
import pytest


def cn(rng, shape):
    """Unit-variance circular complex gaussian draws."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_pd(rng, d, complex_=True):
    A = cn(rng, (d, d)) if complex_ else rng.standard_normal((d, d))
    return A @ A.conj().T + d * np.eye(d)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
