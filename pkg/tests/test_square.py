import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import factorial

from cpeps import square as S
from cpeps.exceptions import ConfigError, ResourceError
from cpeps.fields import FieldConfiguration


def random_ops(rng, n_v, n_u, d):
    return (rng.normal(size=(n_v, n_u, d, d, d, d))
            + 1j * rng.normal(size=(n_v, n_u, d, d, d, d)))


class TestGeometry:
    def test_site_coordinates(self):
        lat = S.DiagonalLattice(4, 3, 0.5)
        assert lat.uv(2, 1) == (1.0, 0.5)
        assert len(lat.sites()) == 12

    @given(st.floats(-5, 5), st.floats(-5, 5))
    def test_coordinate_roundtrip(self, u, v):
        x, y = S.DiagonalLattice.to_xy(u, v)
        assert np.allclose(S.DiagonalLattice.to_uv(x, y), (u, v))

    @pytest.mark.parametrize("args", [(0, 1), (1, 0), (1, 1, 0.0)])
    def test_rejects(self, args):
        with pytest.raises(ConfigError):
            S.DiagonalLattice(*args)


class TestTensors:
    def test_shape_checks(self):
        with pytest.raises(ConfigError):
            S.SquarePepsTensor(np.zeros((1, 2, 2, 2, 3)))
        with pytest.raises(ConfigError):
            S.SquarePepsTensor(np.full((2, 2, 2, 2), np.nan))
        assert S.SquarePepsTensor(np.zeros((2, 2, 2, 2))).n_phys == 1

    def test_species_form(self, rng):
        qa, qb = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
        t = S.SquarePepsTensor.from_q(qa, qb, 0.4)
        m = S.build_M_square(t)
        assert np.allclose(m, np.eye(4) + 0.2 * (np.kron(qa, np.eye(2)) + np.kron(np.eye(2), qb)))

    def test_literal_form_keeps_only_b(self, rng):
        qa, qb = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
        lit = S.SquarePepsTensor.from_q(qa, qb, 0.4, "literal")
        only_b = S.SquarePepsTensor.from_q(np.zeros((2, 2)), qb, 0.4)
        assert np.allclose(lit.a, only_b.a)

    def test_from_q_rejects(self):
        with pytest.raises(ConfigError):
            S.SquarePepsTensor.from_q(np.eye(2), np.eye(3), 0.1)
        with pytest.raises(ConfigError):
            S.SquarePepsTensor.from_q(1.0, 1.0, 0.1, "mixed")

    def test_build_m_index(self):
        with pytest.raises(ConfigError):
            S.build_M_square(S.SquarePepsTensor.identity(1), r=1)


class TestContraction:
    @pytest.mark.parametrize("n_v,n_u,d", [(1, 1, 1), (2, 2, 2), (3, 3, 2), (3, 2, 2), (2, 3, 1)])
    def test_matches_bruteforce(self, rng, n_v, n_u, d):
        ops = random_ops(rng, n_v, n_u, d)
        shape = (d,) * (2 * n_u)
        wl = rng.normal(size=shape) + 1j * rng.normal(size=shape)
        wr = rng.normal(size=shape) + 1j * rng.normal(size=shape)
        a = S.contract_square(ops, wl, wr)
        b = S.contract_square_bruteforce(ops, wl, wr)
        assert a == pytest.approx(b, rel=1e-11)

    def test_identity_network_shifts_b_bonds(self, rng):
        d, n_u, n_v = 2, 3, 4
        ops = S.site_operators(S.SquarePepsTensor.identity(d), np.zeros((n_v, n_u), int))
        shape = (d,) * (2 * n_u)
        wl = rng.normal(size=shape) + 1j * rng.normal(size=shape)
        wr = rng.normal(size=shape) + 1j * rng.normal(size=shape)
        # an identity slice hands b_(k-1) to site k, i.e. cycles the b axes by one
        b_axes = list(range(1, 2 * n_u, 2))
        shifted = np.moveaxis(wr, b_axes, b_axes[1:] + b_axes[:1])
        assert np.allclose(S.apply_slice(ops[0], wr), shifted)
        expected = wr
        for _ in range(n_v):
            expected = np.moveaxis(expected, b_axes, b_axes[1:] + b_axes[:1])
        assert S.contract_square(ops, wl, wr) == pytest.approx(np.vdot(wl, expected))

    def test_uniform_product_analytic(self):
        # rank-one Q blocks: every M acts on the uniform state as a scalar
        eps, qa, qb, n_u, n_v = 0.3, 0.7, -0.4, 3, 4
        t = S.SquarePepsTensor.from_q(qa, qb, eps)
        amp = S.contract_square(S.site_operators(t, np.zeros((n_v, n_u), int)))
        assert amp == pytest.approx((1 + eps / 2 * (qa + qb)) ** (n_u * n_v))

    def test_square_state(self, rng):
        a = rng.normal(size=(2, 1, 1, 1, 1))
        st_ = S.square_state(S.SquarePepsTensor(a), 2, 2)
        assert st_.shape == (2,) * 4
        assert st_[1, 0, 0, 1] == pytest.approx((1 + a[1, 0, 0, 0, 0]) ** 2 * (1 + a[0, 0, 0, 0, 0]) ** 2)

    def test_budgets(self):
        t = S.SquarePepsTensor.identity(2)
        with pytest.raises(ResourceError):
            S.contract_square(S.site_operators(t, np.zeros((2, 6), int)), budget_bytes=1000)
        with pytest.raises(ResourceError):
            S.square_state(S.SquarePepsTensor(np.zeros((2, 1, 1, 1, 1))), 4, 4, budget_bytes=1000)

    def test_bad_operator_shape(self):
        with pytest.raises(ConfigError):
            S.contract_square(np.zeros((2, 2, 2)))


def fock_coherent(phi, cutoff):
    n = np.arange(cutoff)
    return np.exp(-abs(phi) ** 2 / 2) * phi ** n / np.sqrt(factorial(n))


class TestCoherent:
    @given(st.complex_numbers(max_magnitude=1.0), st.complex_numbers(max_magnitude=1.0),
           st.complex_numbers(max_magnitude=1.0), st.complex_numbers(max_magnitude=1.0))
    @settings(max_examples=20, deadline=None)
    def test_step_amplitude_vs_fock(self, oa, ob, ia, ib):
        cut, eps, qa, qb, r = 30, 0.3, 0.8 - 0.2j, 0.5, 0.6 + 0.1j
        num = np.diag(np.arange(cut)).astype(complex)
        ann = np.diag(np.sqrt(np.arange(1, cut)), 1).astype(complex)
        eye = np.eye(cut)
        a, b = np.kron(ann, eye), np.kron(eye, ann)
        m = (np.eye(cut * cut) + 0.5 * eps * (qa * np.kron(num, eye) + qb * np.kron(eye, num))
             + eps * r * a.conj().T @ b.conj().T @ a @ b)
        bra = np.kron(fock_coherent(oa, cut), fock_coherent(ob, cut))
        ket = np.kron(fock_coherent(ia, cut), fock_coherent(ib, cut))
        expected = np.vdot(bra, m @ ket)
        got = S.coherent_step_amplitude([oa], [ob], [ia], [ib], [[qa]], [[qb]], eps,
                                        np.full((1, 1, 1, 1), r))
        assert got == pytest.approx(expected, abs=1e-11)

    def test_overlap_modulus(self, rng):
        p, q = rng.normal(size=3) + 1j * rng.normal(size=3), rng.normal(size=3)
        assert abs(S.coherent_overlap(p, q)) == pytest.approx(np.exp(-0.5 * np.sum(abs(p - q) ** 2)))
        assert S.coherent_overlap(p, p) == pytest.approx(1)

    def test_rescale(self):
        assert S.rescale_square_fields(1.0, 0.5) == pytest.approx(2.0)


def smooth_field(x, y):
    g = np.exp(-((x - 0.3) ** 2 + (y + 0.2) ** 2) / 2.0)
    return np.stack([g * np.exp(1j * (0.7 * x - 0.4 * y)),
                     (0.4 - 0.3j) * g * np.exp(1j * (0.2 * x + 0.5 * y))], -1)


class TestActions:
    def test_uv_and_xy_forms_agree(self):
        n, length = 128, 24.0
        h = length / n
        c = (np.arange(n) - n // 2) * h
        vv, uu = np.meshgrid(c, c, indexing="ij")
        x, y = S.DiagonalLattice.to_xy(uu, vv)
        s_uv = S.square_action(FieldConfiguration(smooth_field(x, y), h, h), 0.6)
        yy, xx = np.meshgrid(c, c, indexing="ij")
        s_xy = S.square_action_xy(FieldConfiguration(smooth_field(xx, yy), h, h), 0.6)
        assert abs(s_uv - s_xy) < 1e-12 * abs(s_xy)

    def test_kernel_symbol(self):
        assert np.allclose(S.square_kernel_symbol(1.0, 2.0), 1j * np.diag([3.0, 1.0]))

    def test_q_field_shape(self):
        cfg = FieldConfiguration(np.zeros((4, 4, 2)), 1.0, 1.0)
        with pytest.raises(ConfigError):
            S.square_action(cfg, np.ones(3))
        assert S.square_action(cfg, np.ones((4, 4))) == 0

    def test_lattice_exponent_first_order(self):
        def psi_c(u, v):
            g = np.exp(-(v - 3) ** 2) * (1 + 0.5 * np.cos(2 * np.pi * u / 4))
            return np.stack([g * np.exp(1j * 2 * np.pi * u / 4),
                             0.5 * (1 + 0.3j) * g * np.exp(-1j * 2 * np.pi * u / 4)], -1)

        m_u, m_v = 256, 1024
        uu, vv = np.meshgrid(np.arange(m_u) * 4 / m_u, np.arange(m_v) * 12 / m_v, indexing="ij")
        cont = S.square_action(FieldConfiguration(np.transpose(psi_c(uu, vv), (1, 0, 2)),
                                                  12 / m_v, 4 / m_u))
        errs = []
        for eps in (0.2, 0.1, 0.05):
            lat = S.DiagonalLattice(int(round(4 / eps)), int(round(24 / eps)), eps)
            n_idx, k_idx = np.meshgrid(np.arange(lat.n_v), np.arange(lat.n_u), indexing="ij")
            phi = psi_c(*lat.uv(n_idx, k_idx)) * np.sqrt(eps / 2)
            errs.append(abs(S.lattice_exponent(lat, phi[..., :1], phi[..., 1:]) - cont))
        assert errs[0] / errs[1] == pytest.approx(2, rel=0.1)
        assert errs[1] / errs[2] == pytest.approx(2, rel=0.1)

    def test_lattice_exponent_q_term(self):
        lat = S.DiagonalLattice(2, 2, 0.2)
        phi = np.full((2, 2, 1), 0.5 + 0j)
        base = S.lattice_exponent(lat, phi, phi)
        withq = S.lattice_exponent(lat, phi, phi, q=0.3)
        assert withq - base == pytest.approx(2 * np.log1p(0.1 * 0.3 * 0.5))


class TestWitness:
    def test_battery_contrast(self):
        sq, eu = S.witness_battery(seed=0, count=4, n=32)
        assert np.median(sq) > 0.05
        assert np.max(eu) < 1e-12
        assert S.witness_ratio(sq, eu) > 1e4

    def test_full_turn_is_trivial(self):
        cfg = S.gaussian_packet(64, 20.0, momentum=(0.5, 0.8), spinor=(1, 0.5j))
        assert S.anisotropy_witness(cfg, np.pi / 2, 0.5) > 0.5
        assert S.anisotropy_witness(cfg, 2 * np.pi, 0.5) < 1e-12

    def test_zero_configuration(self):
        cfg = FieldConfiguration(np.zeros((8, 8, 2)), 1.0, 1.0)
        assert S.anisotropy_witness(cfg, np.pi / 2) == 0.0

    def test_battery_is_reproducible(self):
        a = S.witness_battery(seed=5, count=2, n=32)
        b = S.witness_battery(seed=5, count=2, n=32)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
