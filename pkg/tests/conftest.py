import numpy as np
import pytest

from cpeps.model import CouplingFields, LatticeSpec, ModelSpec

ACCEPTANCE_LINES = []


def random_couplings(rng, n_x, n_t, d, scale=1.0):
    """Generic complex couplings with independent entries on every slice."""

    def draw(*shape):
        return scale * (rng.normal(size=shape) + 1j * rng.normal(size=shape))

    n = max(n_t, 1)
    return CouplingFields(d, draw(n, d, d), draw(n, n_x, d, d), draw(n, n_x, d, d))


def random_spec(rng, n_x, n_t, d=1, epsilon=0.3, boundary=None, scale=1.0):
    return ModelSpec(LatticeSpec(epsilon, n_x, n_t),
                     random_couplings(rng, n_x, n_t, d, scale), boundary=boundary)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)
