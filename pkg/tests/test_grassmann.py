import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_spec
from cpeps import grassmann as g
from cpeps.exceptions import ConfigError, ConsistencyError, ResourceError
from cpeps.fields import FieldConfiguration
from test_fock import jw_annihilators, occupation_index

GEN = g.GrassmannElement.generator


def random_element(draw_rng, n, even=None, density=0.5):
    terms = {}
    for mask in range(1 << n):
        if even is not None and (bin(mask).count("1") % 2 == 0) != even:
            continue
        if draw_rng.random() < density:
            terms[mask] = complex(draw_rng.normal(), draw_rng.normal())
    return g.GrassmannElement(terms, n)


class TestAlgebra:
    @given(st.integers(0, 7), st.integers(0, 7))
    def test_anticommute(self, i, j):
        a, b = GEN(i), GEN(j)
        assert (a * b + b * a).prune().terms == {}

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=30)
    def test_associative_and_distributive(self, seed):
        rng = np.random.default_rng(seed)
        x, y, z = (random_element(rng, 4) for _ in range(3))
        assert ((x * y) * z).allclose(x * (y * z))
        assert (x * (y + z)).allclose(x * y + x * z)

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=30)
    def test_even_elements_commute(self, seed):
        rng = np.random.default_rng(seed)
        x, y = random_element(rng, 4, even=True), random_element(rng, 4)
        assert (x * y).allclose(y * x)

    def test_monomial_order(self):
        m = g.GrassmannElement.monomial([2, 0, 1])
        # theta_2 theta_0 theta_1 = theta_0 theta_1 theta_2 (two swaps)
        assert m.coefficient([0, 1, 2]) == 1
        assert m.coefficient([1, 0, 2]) == -1
        assert m.coefficient([0, 0]) == 0

    def test_unknown_generator(self):
        with pytest.raises(ConfigError):
            GEN(5, n_generators=4)

    def test_parity_and_degree(self):
        x = GEN(0) * GEN(1) + 2.0
        assert x.is_even() and not x.is_odd() and x.degree() == 2
        assert GEN(3).is_odd()

    def test_exp_nilpotent(self):
        pair = GEN(0) * GEN(1)
        assert (pair * 0.5).exp().allclose(pair * 0.5 + 1.0)
        two = GEN(0) * GEN(1) + GEN(2) * GEN(3)
        expected = 1.0 + two + GEN(0) * GEN(1) * GEN(2) * GEN(3)
        assert two.exp().allclose(expected)
        with_body = (two + 0.3).exp()
        assert with_body.allclose(expected * np.exp(0.3))

    def test_exp_odd_rejected(self):
        with pytest.raises(ConfigError):
            GEN(0).exp()

    def test_berezin_rules(self):
        one = g.GrassmannElement.scalar(1.0)
        assert one.integrate([0]).terms == {}
        assert GEN(0).integrate([0]).body == 1
        # int dtheta_0 dtheta_1 theta_0 theta_1 = -1 (inner integral first)
        assert (GEN(0) * GEN(1)).integrate([0, 1]).body == -1
        assert (GEN(1) * GEN(0)).integrate([0, 1]).body == 1

    def test_array_coefficients(self):
        a = g.GrassmannElement.scalar(np.array([1.0, 2.0]))
        b = g.GrassmannElement.scalar(np.array([3.0, 4.0, 5.0]))
        assert np.array_equal((a * b).body, [3, 4, 5, 6, 8, 10])


class TestGaussian:
    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_determinant(self, rng, n):
        a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        assert g.gaussian_integral(a) == pytest.approx(np.linalg.det(a), rel=1e-12)

    def test_singular(self):
        assert abs(g.gaussian_integral(np.ones((3, 3)))) < 1e-14

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_resolution_of_identity(self, n):
        assert np.allclose(g.resolution_matrix(n), np.eye(2 ** n), atol=1e-14)

    @pytest.mark.parametrize("a,b,expected", [(0, 0, 1), (2, 2, 2), (3, 3, 6), (1, 2, 0)])
    def test_bosonic_moment(self, a, b, expected):
        assert g.gaussian_moment(a, b) == expected

    def test_measure_constant(self):
        assert g.slice_measure_constant(1, 2) == pytest.approx(np.pi ** 8)
        assert g.slice_measure_constant(1, 2, literal=True) == pytest.approx(np.pi ** 16)


class TestCoherent:
    def test_grassmann_overlap(self):
        out = g.CoherentLabel.grassmann([0, 2], [1, 3], 4)
        inp = g.CoherentLabel.grassmann([0, 2], [1, 3], 4)
        ov = g.overlap(out, inp, normalized=False)
        expected = (GEN(0) * GEN(1) + GEN(2) * GEN(3)).exp()
        assert ov.allclose(expected)

    @given(st.complex_numbers(max_magnitude=3), st.complex_numbers(max_magnitude=3))
    def test_bosonic_overlap_modulus(self, a, b):
        ov = g.overlap(g.CoherentLabel.bosonic([a]), g.CoherentLabel.bosonic([b]))
        assert abs(ov) == pytest.approx(np.exp(-abs(a - b) ** 2 / 2), rel=1e-9, abs=1e-300)

    def test_derivative_form_second_order(self, rng):
        phi = rng.normal(size=3) + 1j * rng.normal(size=3)
        dot = rng.normal(size=3) + 1j * rng.normal(size=3)
        errs = []
        for eps in (1e-2, 1e-3):
            exact = g.overlap(g.CoherentLabel.bosonic(phi + eps * dot),
                              g.CoherentLabel.bosonic(phi))
            errs.append(abs(exact - g.overlap_derivative_form(phi, dot, eps)))
        assert errs[1] < errs[0] / 50

    @pytest.mark.parametrize("p,q", [(0, 0), (0, 2), (2, 1)])
    def test_operator_symbol(self, p, q):
        n = 3
        states = g.full_fock_states(n)
        cs = jw_annihilators(n)
        idx = [occupation_index(row) for row in states]
        op = (cs[p].conj().T @ cs[q])[np.ix_(idx, idx)]
        bar, gen = [0, 2, 4], [1, 3, 5]
        el = g.operator_matrix_element(bar, gen, states, op, 6)
        expected = GEN(bar[p]) * GEN(gen[q]) * g.bilinear(bar, gen, np.eye(n), 6).exp()
        assert el.allclose(expected)

    def test_full_fock_grouping(self):
        s = g.full_fock_states(3)
        assert s.shape == (8, 3)
        assert list(s.sum(axis=1)) == [0, 1, 1, 1, 2, 2, 2, 3]


class TestStepAmplitude:
    @pytest.mark.parametrize("n_x,d", [(1, 1), (2, 1), (1, 2)])
    def test_closed_form(self, rng, n_x, d):
        spec = random_spec(rng, n_x, 1, d)
        sa = g.step_amplitude(spec, 0, check_tol=1e-12)
        assert sa.deviation() < 1e-12

    def test_exponentiated_second_order(self, rng):
        spec = random_spec(rng, 1, 1, 1)
        devs = [g.step_amplitude(spec, 0, epsilon=e).deviation("exponentiated")
                for e in (1e-2, 1e-3)]
        assert devs[1] < devs[0] / 50

    def test_consistency_error(self, rng, monkeypatch):
        spec = random_spec(rng, 1, 1, 1)
        real = g.step_symbol

        def broken(step, *a, **k):
            return real(step, *a, **k) * 1.01

        monkeypatch.setattr(g, "step_symbol", broken)
        with pytest.raises(ConsistencyError):
            g.step_amplitude(spec, 0, check_tol=1e-12)

    def test_mode_limit(self, rng):
        with pytest.raises(ResourceError):
            g.step_amplitude(random_spec(rng, 5, 1, 1), 0)


class TestChain:
    @pytest.mark.parametrize("n_x,n_t,d", [(1, 1, 1), (2, 2, 1), (1, 3, 2)])
    def test_matches_fock(self, rng, n_x, n_t, d):
        from cpeps.fock import generate_state
        spec = random_spec(rng, n_x, n_t, d)
        assert np.allclose(g.contract_path_integral(spec), generate_state(spec).amplitudes,
                           atol=1e-12)

    def test_pair_limit(self, rng):
        spec = random_spec(rng, 3, 3, 1)
        with pytest.raises(ResourceError):
            g.contract_path_integral(spec)

    def test_bosonic_rejected(self, rng):
        from cpeps.model import Statistics
        spec = random_spec(rng, 1, 1).replace(statistics=Statistics("bosonic"))
        with pytest.raises(ConfigError):
            g.contract_path_integral(spec)


def test_field_rescaling(rng):
    vals = rng.normal(size=(1, 8, 8, 2)) + 1j * rng.normal(size=(1, 8, 8, 2))
    cfg = FieldConfiguration(vals, 0.1, 0.1)
    back = g.lattice_variables(g.rescale_fields(cfg, 0.1), 0.1)
    assert np.allclose(back.values, cfg.values)
    s = g.discrete_action(cfg, 0.7, 0.2)
    assert g.discrete_action(g.rescale_fields(cfg, 0.1), 0.7, 0.2) == pytest.approx(s / 0.1)
