"""Square-lattice PEPS in diagonal coordinates and its anisotropic continuum action.

Geometry
--------
Diagonal coordinates are ``u = (x - y)/2`` and ``v = (x + y)/2``; ``v`` plays
the role of auxiliary time.  Slice ``n`` (``v = n eps/2``) carries ``n_u``
sites at ``u = (k + n/2) eps`` on a periodic ring.  Site ``k`` of slice ``n``
receives its ``a`` bond from site ``k`` of slice ``n + 1`` (at ``u + eps/2``)
and its ``b`` bond from site ``k - 1`` of slice ``n + 1`` (at ``u - eps/2``).

Each bond carries one particle in ``D`` modes, so the per-site operator
``M[r] = 1 + A^r_(ijkl) |ij><kl|`` is a ``D^2 x D^2`` matrix on the
one-particle a-space tensor the one-particle b-space.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .exceptions import ConfigError, ResourceError
from .fields import FieldConfiguration, derivative
from .fock import DEFAULT_BUDGET_BYTES

Q_FORMS = ("species", "literal")


# ------------------------------------------------------------------ geometry

@dataclass(frozen=True)
class DiagonalLattice:
    """Diagonal lattice with ``n_u`` sites per slice and ``n_v`` slices, spacing ``eps``."""

    n_u: int
    n_v: int
    epsilon: float = 1.0

    def __post_init__(self):
        if self.n_u < 1 or self.n_v < 1:
            raise ConfigError("diagonal lattice needs n_u >= 1 and n_v >= 1")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")

    def uv(self, n, k):
        return ((k + n / 2) * self.epsilon, n * self.epsilon / 2)

    @staticmethod
    def to_xy(u, v):
        return u + v, v - u

    @staticmethod
    def to_uv(x, y):
        return (x - y) / 2, (x + y) / 2

    def sites(self):
        return [(n, k) for n in range(self.n_v) for k in range(self.n_u)]


# ------------------------------------------------------------------ tensors

@dataclass(frozen=True, eq=False)
class SquarePepsTensor:
    """Site tensor ``A^r_(ijkl)`` with shape ``(P, D, D, D, D)``.

    ``i, j`` are the outgoing a and b bonds, ``k, l`` the incoming ones.
    """

    a: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=complex)
        if a.ndim == 4:
            a = a[None]
        if a.ndim != 5 or len(set(a.shape[1:])) != 1:
            raise ConfigError(f"tensor must have shape (P, D, D, D, D), got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ConfigError("tensor entries must be finite")
        object.__setattr__(self, "a", a)

    @property
    def d(self) -> int:
        return self.a.shape[1]

    @property
    def n_phys(self) -> int:
        return self.a.shape[0]

    @classmethod
    def from_q(cls, q_a, q_b, epsilon, form="species", n_phys=1):
        """Structured tensor from the bond-scattering matrices ``Q_a``, ``Q_b``.

        ``"species"``: ``A = (eps/2)(Q_a (x) 1 + 1 (x) Q_b)``, i.e. the one-particle
        restriction of ``Q_a^{ij} a^dag_i a_j + Q_b^{ij} b^dag_i b_j``.
        ``"literal"``: ``Q_a^{ij} a^dag_i b_j`` moves the b particle into the a
        factor, which leaves the one-particle by one-particle space; its
        projection there vanishes and only the ``Q_b`` part survives.
        """
        if form not in Q_FORMS:
            raise ConfigError(f"unknown Q form {form!r}")
        q_a = np.atleast_2d(np.asarray(q_a, dtype=complex))
        q_b = np.atleast_2d(np.asarray(q_b, dtype=complex))
        if q_a.shape != q_b.shape or q_a.shape[0] != q_a.shape[1]:
            raise ConfigError("Q_a and Q_b must be square matrices of equal size")
        d = q_a.shape[0]
        eye = np.eye(d)
        a_part = np.einsum("ik,jl->ijkl", q_a, eye) if form == "species" else 0.0
        a = 0.5 * epsilon * (a_part + np.einsum("ik,jl->ijkl", eye, q_b))
        return cls(np.broadcast_to(a, (n_phys, d, d, d, d)).copy())

    @classmethod
    def identity(cls, d, n_phys=1):
        return cls(np.zeros((n_phys, d, d, d, d), dtype=complex))


def build_M_square(tensor, r=0) -> np.ndarray:
    """``M[r] = 1 + A^r_(ijkl) |ij><kl|`` as a ``(D^2, D^2)`` matrix, rows ``(i, j)``."""
    t = tensor if isinstance(tensor, SquarePepsTensor) else SquarePepsTensor(tensor)
    if not 0 <= r < t.n_phys:
        raise ConfigError(f"physical index {r} outside 0..{t.n_phys - 1}")
    d = t.d
    return np.eye(d * d, dtype=complex) + t.a[r].reshape(d * d, d * d)


def uniform_boundary(n_u, d) -> np.ndarray:
    """Uniform one-particle state on every bond, as a tensor of shape ``(D,) * 2 n_u``."""
    v = np.ones((d,) * (2 * n_u), dtype=complex)
    return v / np.linalg.norm(v)


def _site_grid(tensors, n_u, n_v, d):
    """Normalise the site data to an ``(n_v, n_u, D, D, D, D)`` array of ``M`` tensors."""
    m = np.asarray(tensors, dtype=complex)
    if m.shape == (d, d, d, d):
        m = np.broadcast_to(m, (n_v, n_u, d, d, d, d))
    if m.shape != (n_v, n_u, d, d, d, d):
        raise ConfigError(f"site operators have shape {m.shape}, expected {(n_v, n_u) + (d,) * 4}")
    return m


def site_operators(tensor: SquarePepsTensor, config) -> np.ndarray:
    """``M[r(n, k)]`` tensors of shape ``(n_v, n_u, D, D, D, D)`` for a physical configuration."""
    config = np.asarray(config, dtype=int)
    d = tensor.d
    eye = np.einsum("ik,jl->ijkl", np.eye(d), np.eye(d))
    return eye + tensor.a[config]


def _check_budget(n_u, d, budget_bytes):
    need = 16 * 4 * d ** (2 * n_u)
    if need > budget_bytes:
        raise ResourceError(f"square-lattice contraction needs {need} bytes",
                            required_bytes=need, budget_bytes=budget_bytes,
                            suggestion="reduce n_u or the bond dimension")


def apply_slice(m_slice, psi):
    """Apply ``U = (x)_k M_k`` to a frontier tensor.

    ``m_slice`` has shape ``(n_u, D, D, D, D)`` and ``psi`` has axes
    ``(a_0, b_0, a_1, b_1, ...)`` of the later slice.  Site ``k`` reads
    ``a_k`` and ``b_(k-1)``.
    """
    n_u = m_slice.shape[0]
    out = psi
    # gather inputs: site k takes (a_k, b_{k-1}); move them into site order
    axes = []
    for k in range(n_u):
        axes += [2 * k, 2 * ((k - 1) % n_u) + 1]
    out = np.transpose(out, axes)
    for k in range(n_u):
        # contract axes (2k, 2k+1) with M_k[i, j, :, :]
        out = np.tensordot(m_slice[k], out, axes=([2, 3], [2 * k, 2 * k + 1]))
        out = np.moveaxis(out, (0, 1), (2 * k, 2 * k + 1))
    return out


def contract_square(site_ops, omega_l=None, omega_r=None,
                    budget_bytes=DEFAULT_BUDGET_BYTES) -> complex:
    """``<omega_L| U_0 U_1 ... U_(n_v - 1) |omega_R>`` by sequential slice application.

    ``site_ops`` has shape ``(n_v, n_u, D, D, D, D)`` (``M`` tensors with
    output indices first).  Boundaries default to :func:`uniform_boundary`.
    """
    m = np.asarray(site_ops, dtype=complex)
    if m.ndim != 6:
        raise ConfigError("site operators need shape (n_v, n_u, D, D, D, D)")
    n_v, n_u, d = m.shape[:3]
    _check_budget(n_u, d, budget_bytes)
    omega_l = uniform_boundary(n_u, d) if omega_l is None else np.asarray(omega_l, dtype=complex)
    omega_r = uniform_boundary(n_u, d) if omega_r is None else np.asarray(omega_r, dtype=complex)
    shape = (d,) * (2 * n_u)
    psi = omega_r.reshape(shape)
    for n in range(n_v - 1, -1, -1):
        psi = apply_slice(m[n], psi)
    return complex(np.vdot(omega_l.reshape(shape), psi))


def contract_square_bruteforce(site_ops, omega_l=None, omega_r=None) -> complex:
    """The same network as one ``einsum`` over every bond label."""
    m = np.asarray(site_ops, dtype=complex)
    n_v, n_u, d = m.shape[:3]
    omega_l = uniform_boundary(n_u, d) if omega_l is None else np.asarray(omega_l, dtype=complex)
    omega_r = uniform_boundary(n_u, d) if omega_r is None else np.asarray(omega_r, dtype=complex)
    # label (n, k, s): output bond s of site k on slice n; slice n_v holds omega_R
    labels = {}

    def lab(n, k, s):
        key = (n, k % n_u, s)
        if key not in labels:
            labels[key] = len(labels)
        return labels[key]

    operands, subs = [omega_l.conj().reshape((d,) * (2 * n_u))], []
    subs.append([lab(0, k, s) for k in range(n_u) for s in (0, 1)])
    for n in range(n_v):
        for k in range(n_u):
            operands.append(m[n, k])
            subs.append([lab(n, k, 0), lab(n, k, 1), lab(n + 1, k, 0), lab(n + 1, k - 1, 1)])
    operands.append(omega_r.reshape((d,) * (2 * n_u)))
    subs.append([lab(n_v, k, s) for k in range(n_u) for s in (0, 1)])
    args = []
    for op, sub in zip(operands, subs):
        args += [op, sub]
    return complex(np.einsum(*args, [], optimize="greedy"))


def square_state(tensor: SquarePepsTensor, n_u, n_v, omega_l=None, omega_r=None,
                 budget_bytes=DEFAULT_BUDGET_BYTES) -> np.ndarray:
    """Amplitudes for every physical configuration, shape ``(P,) * (n_v n_u)`` (slice-major)."""
    p = tensor.n_phys
    count = p ** (n_u * n_v)
    if 16 * count > budget_bytes:
        raise ResourceError("physical state does not fit the budget",
                            required_bytes=16 * count, budget_bytes=budget_bytes,
                            suggestion="reduce the lattice or the physical dimension")
    out = np.empty(count, dtype=complex)
    for idx in range(count):
        config = np.array(np.unravel_index(idx, (p,) * (n_u * n_v))).reshape(n_v, n_u)
        out[idx] = contract_square(site_operators(tensor, config), omega_l, omega_r, budget_bytes)
    return out.reshape((p,) * (n_u * n_v))


# ------------------------------------------------------- coherent amplitudes

def coherent_overlap(phi_out, phi_in):
    """Bosonic ``<phi|phi'>`` for normalised displaced vacua (product over modes)."""
    phi_out, phi_in = np.asarray(phi_out, dtype=complex), np.asarray(phi_in, dtype=complex)
    return np.exp(np.sum(np.conj(phi_out) * phi_in
                         - 0.5 * np.abs(phi_out) ** 2 - 0.5 * np.abs(phi_in) ** 2))


def coherent_step_amplitude(out_a, out_b, in_a, in_b, q_a=None, q_b=None, epsilon=1.0,
                            r_hat=None):
    """``<phi_a, phi_b| M |phi'_a, phi'_b>`` for the number-conserving site operators.

    ``M = 1 + (eps/2)(Q_a^{ij} a^dag_i a_j + Q_b^{ij} b^dag_i b_j)
    + eps R^{(ia ib)(ja jb)} a^dag_ia b^dag_ib a_ja b_jb``.  Normal ordering turns each
    operator into its symbol times the overlap.  ``r_hat`` has shape
    ``(D, D, D, D)`` indexed ``(ia, ib, ja, jb)``.
    """
    ov = coherent_overlap(out_a, in_a) * coherent_overlap(out_b, in_b)
    ca, cb = np.conj(out_a), np.conj(out_b)
    corr = 0.0
    if q_a is not None:
        corr += 0.5 * epsilon * ca @ np.asarray(q_a) @ in_a
    if q_b is not None:
        corr += 0.5 * epsilon * cb @ np.asarray(q_b) @ in_b
    if r_hat is not None:
        corr += epsilon * np.einsum("abcd,a,b,c,d->", np.asarray(r_hat), ca, cb, in_a, in_b)
    return complex(ov * (1 + corr))


def rescale_square_fields(phi, epsilon):
    """Continuum field ``Psi = phi / sqrt(eps/2)`` for the diagonal lattice cell."""
    return np.asarray(phi) / np.sqrt(epsilon / 2)


def lattice_exponent(lattice: DiagonalLattice, phi_a, phi_b, q=0.0) -> complex:
    """Sum over sites and slices of ``log`` of the identity-plus-Q step amplitude.

    ``phi_a``, ``phi_b`` have shape ``(n_v, n_u, D)``.  Site ``(n, k)`` links
    ``phi_a(n, k)`` with ``phi_a(n + 1, k)`` and ``phi_b(n, k)`` with
    ``phi_b(n + 1, k - 1)``; the last slice has no successor.
    """
    phi_a, phi_b = np.asarray(phi_a, dtype=complex), np.asarray(phi_b, dtype=complex)
    eps = lattice.epsilon
    nxt_a = phi_a[1:]
    nxt_b = np.roll(phi_b[1:], 1, axis=1)
    out_a, out_b = phi_a[:-1], phi_b[:-1]

    def log_ov(o, i):
        return np.sum(np.conj(o) * i - 0.5 * np.abs(o) ** 2 - 0.5 * np.abs(i) ** 2, axis=-1)

    total = log_ov(out_a, nxt_a) + log_ov(out_b, nxt_b)
    q = np.asarray(q, dtype=complex)
    if np.any(q != 0):
        sym = np.sum(np.conj(out_a) * nxt_a, axis=-1) + np.sum(np.conj(out_b) * nxt_b, axis=-1)
        qq = np.broadcast_to(q, phi_a.shape[:2])[:-1]
        total = total + np.log1p(0.5 * eps * qq * sym)
    return complex(np.sum(total))


# ------------------------------------------------------------------ actions

def square_kernel_symbol(k_u, k_v) -> np.ndarray:
    """Fourier symbol ``i (sigma_z k_u + k_v)`` of ``sigma_z d_u + d_v``."""
    return 1j * np.array([[k_u + k_v, 0], [0, -k_u + k_v]], dtype=complex)


def _q_field(q, cfg):
    q = np.asarray(q, dtype=complex)
    return np.broadcast_to(q, cfg.shape) if q.ndim in (0, 2) else None


def square_action(cfg: FieldConfiguration, q=0.0, mode="spectral") -> complex:
    """``int du dv [ 1/2 Psi^dag (sigma_z d_u + d_v) Psi - Q Psi^dag Psi ]``.

    ``cfg`` axes are ``(flavor, v, u, spinor)`` with ``dt = dv`` and
    ``dx = du``; ``Q`` is a scalar or a ``(n_v, n_u)`` field.
    """
    psi = cfg.values
    qf = _q_field(q, cfg)
    if qf is None:
        raise ConfigError("Q must be a scalar or a field on the (v, u) grid")
    d_v = derivative(psi, cfg.dt, -3, mode)
    d_u = derivative(psi, cfg.dx, -2, mode)
    sz = np.array([1.0, -1.0])
    kin = 0.5 * np.sum(np.conj(psi) * (sz * d_u + d_v))
    pot = np.sum(qf[None, ..., None] * np.abs(psi) ** 2)
    return complex((kin - pot) * cfg.cell)


def square_action_xy(cfg: FieldConfiguration, q=0.0, mode="spectral") -> complex:
    """``int dx dy 1/2 [Psi^dag (d_x Psi_a, d_y Psi_b) - Q Psi^dag Psi]``.

    ``cfg`` axes are ``(flavor, y, x, spinor)`` with ``dt = dy``, ``dx = dx``.
    """
    psi = cfg.values
    qf = _q_field(q, cfg)
    if qf is None:
        raise ConfigError("Q must be a scalar or a field on the (y, x) grid")
    d_y = derivative(psi, cfg.dt, -3, mode)
    d_x = derivative(psi, cfg.dx, -2, mode)
    kin = np.sum(np.conj(psi[..., 0]) * d_x[..., 0] + np.conj(psi[..., 1]) * d_y[..., 1])
    pot = np.sum(qf[None, ..., None] * np.abs(psi) ** 2)
    return complex(0.5 * (kin - pot) * cfg.cell)


def anisotropy_witness(cfg: FieldConfiguration, alpha, q=0.0, action=None) -> float:
    """``|S[rotate(cfg, alpha)] - S[cfg]| / |S[cfg]|`` for the square-lattice action.

    The rotation is the Euclidean one used for the rotation-invariant action,
    so the two witnesses are directly comparable.  ``action`` overrides the
    evaluator (called as ``action(cfg)``).
    """
    from .clifford import rotate_configuration

    act = action or (lambda c: square_action(c, q))
    s0 = act(cfg)
    s1 = act(rotate_configuration(cfg, alpha))
    if s0 == 0:
        return 0.0 if s1 == 0 else float("inf")
    return float(abs(s1 - s0) / abs(s0))


def euclidean_witness(cfg: FieldConfiguration, alpha, m=0.0) -> float:
    from .clifford import euclidean_action

    return anisotropy_witness(cfg, alpha, action=lambda c: euclidean_action(c, m))


def gaussian_packet(n, length, centre=(0.0, 0.0), width=None, momentum=(0.0, 0.0),
                    spinor=(1.0, 0.0), n_flavors=1) -> FieldConfiguration:
    """Smooth Gaussian spinor packet on an ``n x n`` periodic grid centred on index 0."""
    h = length / n
    width = width or length / 10
    c = np.where(np.arange(n) >= n / 2, np.arange(n) - n, np.arange(n)) * h
    a0, a1 = np.meshgrid(c, c, indexing="ij")
    env = np.exp(-((a0 - centre[0]) ** 2 + (a1 - centre[1]) ** 2) / (2 * width ** 2))
    env = env * np.exp(1j * (momentum[0] * a0 + momentum[1] * a1))
    vals = env[..., None] * np.asarray(spinor, dtype=complex)
    return FieldConfiguration(np.broadcast_to(vals, (n_flavors, n, n, 2)).copy(), h, h)


def random_smooth_configuration(rng, n=64, length=20.0, n_packets=3) -> FieldConfiguration:
    """Sum of a few random Gaussian packets (shared battery generator)."""
    total = None
    for _ in range(n_packets):
        spinor = rng.normal(size=2) + 1j * rng.normal(size=2)
        cfg = gaussian_packet(n, length, centre=rng.uniform(-3, 3, 2),
                              width=rng.uniform(1.2, 2.5), momentum=rng.uniform(-1.5, 1.5, 2),
                              spinor=spinor)
        total = cfg.values if total is None else total + cfg.values
    return FieldConfiguration(total, length / n, length / n)


def witness_battery(seed=0, count=20, alpha=np.pi / 2, n=64, length=20.0, q=0.5, m=0.5):
    """Square-lattice and Euclidean witnesses over a reproducible random battery."""
    rng = np.random.default_rng(seed)
    sq, eu = [], []
    for _ in range(count):
        cfg = random_smooth_configuration(rng, n, length)
        sq.append(anisotropy_witness(cfg, alpha, q))
        eu.append(euclidean_witness(cfg, alpha, m))
    return np.array(sq), np.array(eu)


def witness_ratio(square_witnesses, euclidean_witnesses, floor=np.finfo(float).tiny) -> float:
    """Median square witness over median Euclidean witness (the latter floored at ``tiny``)."""
    return float(np.median(square_witnesses) / max(np.median(euclidean_witnesses), floor))
