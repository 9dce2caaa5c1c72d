import numpy as np
import pytest

from cpeps import onebody
from cpeps.model import LatticeSpec, mode_offset


@pytest.mark.parametrize("n_x,bc,expected", [
    (1, "periodic", [[3]]),
    (2, "periodic", [[1, 2], [2, 1]]),
    (4, "open", [[1, 1, 0, 0], [1, 1, 1, 0], [0, 1, 1, 1], [0, 0, 1, 1]]),
])
def test_hop_counts(n_x, bc, expected):
    assert np.array_equal(onebody.hop_counts(LatticeSpec(1.0, n_x, 0, bc=bc)), expected)


def test_hop_counts_rows_sum_to_three():
    c = onebody.hop_counts(LatticeSpec(1.0, 7, 0))
    assert np.all(c.sum(axis=1) == 3)


@pytest.mark.parametrize("d", [1, 2])
def test_hopping_symmetry(rng, d):
    lat = LatticeSpec(0.5, 5, 0, epsilon_x=0.25)
    herm = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    herm = herm + herm.conj().T
    h = onebody.hopping_matrix(lat, herm)
    assert np.allclose(h, h.conj().T)
    h_anti = onebody.hopping_matrix(lat, 1j * herm)
    assert np.allclose(h_anti, -h_anti.conj().T)


def test_hopping_entry_scale():
    lat = LatticeSpec(1.0, 4, 0, epsilon_x=0.5)
    h = onebody.hopping_matrix(lat, 1.0)
    a0, b1 = mode_offset(0, "a", 0, 1), mode_offset(1, "b", 0, 1)
    assert h[a0, b1] == pytest.approx(2.0)
    # no same-species hopping
    assert h[a0, mode_offset(1, "a", 0, 1)] == 0


def test_mass_and_density(rng):
    m0 = rng.normal(size=(3, 2, 2))
    h = onebody.mass_matrix(3, m0)
    a, b = mode_offset(1, "a", 0, 2), mode_offset(1, "b", 0, 2)
    assert np.allclose(h[a:a + 2, a:a + 2], m0[1])
    assert np.allclose(h[b:b + 2, b:b + 2], -m0[1])
    r = np.array([[0.5, 0.1], [0.2, 0.3]])
    g = onebody.density_matrix(3, 2, r)
    a2, b2 = mode_offset(2, "a", 0, 2), mode_offset(2, "b", 0, 2)
    assert np.allclose(g[a2:a2 + 2, a2:a2 + 2], r) and np.allclose(g[b2:b2 + 2, b2:b2 + 2], r)
    assert np.count_nonzero(g) == 2 * np.count_nonzero(r)


def test_onsite_species():
    f = np.arange(3.0)
    ha = onebody.onsite_matrix(3, f, "a")
    hb = onebody.onsite_matrix(3, f, "b")
    assert ha[mode_offset(2, "a", 0, 1), mode_offset(2, "a", 0, 1)] == 2
    assert hb[mode_offset(2, "b", 0, 1), mode_offset(2, "b", 0, 1)] == 2
    assert np.trace(ha) == np.trace(hb) == 3
