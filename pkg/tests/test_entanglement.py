import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_spec
from cpeps import entanglement as E
from cpeps.exceptions import ConfigError, ResourceError
from cpeps.fock import generate_state


@pytest.fixture(scope="module")
def state():
    return generate_state(random_spec(np.random.default_rng(3), 3, 2, 1))


class TestRegion:
    def test_rectangle_wraps(self):
        r = E.Region.rectangle(2, 2, 0, 1, 3, 2)
        assert r.sites == frozenset({(2, 0), (0, 0)})

    @pytest.mark.parametrize("sites", [[], [(0, 0), (1, 0), (0, 1), (1, 1)], [(2, 0)]])
    def test_invalid(self, sites):
        with pytest.raises(ConfigError):
            E.Region(frozenset(sites), 2, 2)

    def test_modes_time_major(self):
        r = E.Region(frozenset({(1, 1), (0, 0)}), 3, 2)
        assert r.modes() == [0, 4]

    def test_boundary_of_strip(self):
        # full-time strips in x: every site touches the complement
        r = E.Region.rectangle(0, 2, 0, 3, 6, 3)
        assert r.boundary_size == 6
        wide = E.Region.rectangle(0, 4, 0, 3, 6, 3)
        assert wide.boundary_size == 6

    def test_boundary_interior_excluded(self):
        r = E.Region.rectangle(1, 3, 1, 3, 6, 5)
        assert (2, 2) not in r.boundary and r.boundary_size == 8

    def test_open_boundary_in_time(self):
        # a full-width band touches the complement only through time
        r = E.Region.rectangle(0, 4, 0, 1, 4, 3)
        assert r.boundary_size == 4

    def test_complement(self):
        r = E.Region.rectangle(0, 1, 0, 1, 2, 2)
        assert r.complement().size == 3
        assert r.complement().complement() == r


class TestDensity:
    def test_reduced_density_properties(self, state):
        rho = E.reduced_density(state, E.Region.rectangle(0, 2, 0, 1, 3, 2))
        assert np.trace(rho) == pytest.approx(1)
        assert np.allclose(rho, rho.conj().T)
        assert np.linalg.eigvalsh(rho).min() > -1e-12

    def test_product_state(self):
        psi = np.kron([1, 0], [0.6, 0.8])
        rho = E.reduced_density(psi, [0], local_dim=2, n_modes=2)
        assert np.allclose(rho, np.diag([1, 0]))
        assert E.entropy(rho) == 0.0

    def test_bell_state(self):
        psi = np.array([1, 0, 0, 1]) / np.sqrt(2)
        rho = E.reduced_density(psi, [1], local_dim=2, n_modes=2)
        assert E.entropy(rho) == pytest.approx(np.log(2))
        sv = E.schmidt_values(psi, [1], local_dim=2, n_modes=2)
        assert E.schmidt_rank(sv) == 2

    def test_budget(self, state):
        with pytest.raises(ResourceError):
            E.reduced_density(state, E.Region.rectangle(0, 3, 0, 1, 3, 2), budget_bytes=100)

    @pytest.mark.parametrize("rho", [np.array([[1, 1], [0, 0]]), np.diag([0.5, 0.6]),
                                     np.diag([1.2, -0.2])])
    def test_entropy_rejects(self, rho):
        with pytest.raises(ConfigError):
            E.entropy(rho)

    @given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=6).filter(lambda p: sum(p) > 0.1))
    def test_entropy_bounds(self, p):
        p = np.array(p) / sum(p)
        s = E.entropy(np.diag(p))
        assert -1e-12 <= s <= np.log(np.count_nonzero(p > 1e-14)) + 1e-12


class TestSchmidt:
    def test_symmetry_all_bipartitions(self, state):
        sites = [(x, t) for t in range(2) for x in range(3)]
        for k in range(1, len(sites)):
            for sub in itertools.combinations(sites, k):
                reg = E.Region(frozenset(sub), 3, 2)
                a, b = E.region_entropy(state, reg), E.region_entropy(state, reg.complement())
                assert abs(a.entropy - b.entropy) < 1e-10
                assert a.rank == b.rank
                assert a.entropy <= np.log(a.rank) + 1e-12

    def test_entropy_routes_agree(self, state):
        reg = E.Region.rectangle(1, 2, 0, 2, 3, 2)
        rho = E.reduced_density(state, reg)
        assert E.entropy(rho) == pytest.approx(E.region_entropy(state, reg).entropy, abs=1e-12)

    @pytest.mark.parametrize("n_x,n_t,d", [(2, 3, 1), (3, 3, 1), (2, 2, 2)])
    def test_temporal_cut_bound(self, n_x, n_t, d):
        st_ = generate_state(random_spec(np.random.default_rng(n_x * 10 + n_t), n_x, n_t, d))
        for t0 in range(n_t + 1):
            cut = E.temporal_cut_rank(st_, t0)
            assert cut.rank <= st_.aux_dim and cut.within_bound
        assert E.temporal_cut_rank(st_, 0).rank == 1

    def test_cut_out_of_range(self, state):
        with pytest.raises(ConfigError):
            E.temporal_cut_rank(state, 5)


class TestAreaLaw:
    def test_scan(self, state):
        regions = E.square_regions(3, 2)
        rep = E.area_law_scan(state, regions)
        assert len(rep.rows) == len(regions) == 2
        for r in rep.rows:
            assert r.entropy <= rep.constant * r.boundary_size + 1e-12
        assert rep.table()[0][:2] == (1, 1)

    def test_subextensive_flag(self):
        rows = (E.EntropyReport(1.0, 2, 1, 1, 1.0), E.EntropyReport(1.5, 2, 2, 2, 1.0))
        assert E.AreaLawReport(rows).subextensive
        rows = (E.EntropyReport(0.1, 2, 1, 1, 1.0), E.EntropyReport(1.5, 2, 2, 2, 1.0))
        assert not E.AreaLawReport(rows).subextensive

    def test_square_regions_are_proper(self):
        regs = E.square_regions(2, 2)
        assert [r.size for r in regs] == [1]
