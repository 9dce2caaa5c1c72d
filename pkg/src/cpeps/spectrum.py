"""Momentum-space analysis of the one-body auxiliary Hamiltonian.

Covers the hopping kernel ``(1 + 2 cos p eps) / eps``, its zeros (the two
flavor sectors), the low-energy dispersion, envelope decomposition into the
two sectors and the size of flavor-mixing matrix elements of on-site
potentials.

Within a site the one-body block is indexed ``s * D + j`` (species major),
matching the canonical mode offset of :mod:`cpeps.model`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import fft
from scipy.optimize import bisect

from . import onebody
from .exceptions import ConfigError
from .fields import SIGMA_X, SIGMA_Z
from .model import LatticeSpec, momentum_grid

BISECT_XTOL = 1e-15
BISECT_RTOL = 4 * np.finfo(float).eps
INVARIANCE_TOL = 1e-12


# --------------------------------------------------------------------------
# kernel and zeros
# --------------------------------------------------------------------------


def kernel_symbol(p, epsilon):
    """``(1 + 2 cos(p eps)) / eps``."""
    return (1 + 2 * np.cos(np.asarray(p) * epsilon)) / epsilon


def kernel_block(p, epsilon, j, m0=None):
    """Analytic ``2D x 2D`` block ``J (1 + 2 cos p eps)/eps sigma_x + m0 sigma_z``."""
    j = np.atleast_2d(np.asarray(j, dtype=complex))
    out = np.kron(SIGMA_X, j) * kernel_symbol(p, epsilon)
    if m0 is not None:
        out = out + np.kron(SIGMA_Z, np.atleast_2d(np.asarray(m0, dtype=complex)))
    return out


def kernel_derivative(p, epsilon, j):
    """``d/dp`` of :func:`kernel_block` without the mass term."""
    j = np.atleast_2d(np.asarray(j, dtype=complex))
    return np.kron(SIGMA_X, j) * (-2 * np.sin(p * epsilon))


def dispersion_zeros(epsilon: float):
    """Roots ``(q_0, q_1)`` of ``1 + 2 cos(p eps)`` with ``q_1 = -q_0``.

    The positive root is bracketed on ``[0, pi/eps]`` and found by bisection.
    """
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    root = bisect(lambda p: 1 + 2 * np.cos(p * epsilon), 0.0, np.pi / epsilon,
                  xtol=BISECT_XTOL, rtol=BISECT_RTOL, maxiter=400)
    return root, -root


def sector_centers(epsilon: float):
    """Closed-form ``q_mu = (-1)^mu 2 pi / (3 eps)``."""
    q = 2 * np.pi / (3 * epsilon)
    return q, -q


# --------------------------------------------------------------------------
# one-body matrices in momentum space
# --------------------------------------------------------------------------


def one_body_hamiltonian(lattice: LatticeSpec, j, m0=None, f=None) -> np.ndarray:
    """Dense one-body matrix of ``H_h + H_m (+ sum_x f(x) a^dag a)``."""
    h = onebody.hopping_matrix(lattice, j)
    d = np.atleast_2d(np.asarray(j)).shape[0]
    if m0 is not None:
        m0 = np.asarray(m0, dtype=complex)
        h = h + onebody.mass_matrix(lattice.n_x, m0 * np.eye(d) if m0.ndim == 0 else m0)
    if f is not None:
        h = h + onebody.onsite_matrix(lattice.n_x, f)
    return h


def dft_unitary(n_x: int, epsilon: float, block: int) -> np.ndarray:
    """``U[(p, i), (x, i')] = delta_{ii'} exp(-i p x) / sqrt(n_x)`` on the momentum grid."""
    p = momentum_grid(n_x, epsilon)
    x = np.arange(n_x) * epsilon
    f = np.exp(-1j * np.outer(p, x)) / np.sqrt(n_x)
    return np.kron(f, np.eye(block))


def _check_translation_invariant(h, n_x, block):
    hb = h.reshape(n_x, block, n_x, block)
    ref = hb[0]
    for x in range(1, n_x):
        shifted = np.roll(ref, x, axis=1)
        if np.max(np.abs(hb[x] - shifted)) > INVARIANCE_TOL:
            raise ConfigError("couplings are not translation invariant; use direct "
                              "diagonalization of the one-body matrix instead")


@dataclass
class KernelBlocks:
    momenta: np.ndarray
    blocks: np.ndarray
    off_block_residual: float


def dft_kernel(h: np.ndarray, lattice: LatticeSpec) -> KernelBlocks:
    """Block-diagonalise a translation-invariant one-body matrix by DFT conjugation.

    Returns the momentum grid, the ``(n_x, 2D, 2D)`` blocks and the largest
    off-block entry of the conjugated matrix.
    """
    if not lattice.periodic:
        raise ConfigError("DFT analysis requires periodic boundaries", "lattice.bc")
    n_x = lattice.n_x
    block = h.shape[0] // n_x
    _check_translation_invariant(h, n_x, block)
    u = dft_unitary(n_x, lattice.epsilon_x, block)
    ht = (u @ h @ u.conj().T).reshape(n_x, block, n_x, block)
    blocks = np.stack([ht[i, :, i, :] for i in range(n_x)])
    mask = np.ones((n_x, n_x), bool)
    np.fill_diagonal(mask, False)
    off = float(np.max(np.abs(ht.transpose(0, 2, 1, 3)[mask]))) if n_x > 1 else 0.0
    return KernelBlocks(momentum_grid(n_x, lattice.epsilon_x), blocks, off)


def kernel_blocks_fast(lattice: LatticeSpec, j, m0=None) -> KernelBlocks:
    """Momentum blocks from the first block row of the one-body matrix.

    Equivalent to :func:`dft_kernel` for translation-invariant couplings but
    needs only ``O(n_x)`` memory, which matters at ``n_x`` in the thousands.
    """
    if not lattice.periodic:
        raise ConfigError("DFT analysis requires periodic boundaries", "lattice.bc")
    j = np.atleast_2d(np.asarray(j, dtype=complex))
    d = j.shape[0]
    n_x, eps = lattice.n_x, lattice.epsilon_x
    counts = onebody.hop_counts(LatticeSpec(eps, min(n_x, 3), 0, eps)) if n_x < 3 else None
    row = np.zeros((n_x, 2 * d, 2 * d), dtype=complex)
    if counts is not None:
        for y in range(n_x):
            row[y] = np.kron(SIGMA_X, j) * counts[0, y] / eps
    else:
        for y in (0, 1, n_x - 1):
            row[y] += np.kron(SIGMA_X, j) / eps
    if m0 is not None:
        row[0] += np.kron(SIGMA_Z, np.atleast_2d(np.asarray(m0, dtype=complex)))
    p = momentum_grid(n_x, eps)
    # block(p) = sum_y row[y] exp(i p y eps); fft on the integer label keeps it exact
    blocks = fft.ifft(row, axis=0) * n_x
    return KernelBlocks(p, blocks, 0.0)


# --------------------------------------------------------------------------
# dispersion
# --------------------------------------------------------------------------


def band_energies(blocks: np.ndarray) -> np.ndarray:
    """Absolute eigenvalues per momentum block, sorted ascending."""
    vals = np.linalg.eigvals(blocks)
    return np.sort(np.abs(vals), axis=-1)


def raw_group_velocity(n_x: int = 1200, epsilon: float = 1.0, j: float = 1.0,
                       mu: int = 0) -> float:
    """Slope of ``|E|`` at ``q_mu`` from the one-body spectrum.

    Uses the two grid momenta adjacent to ``q_mu`` at distance ``Delta`` and
    ``2 Delta`` and Richardson-combines the symmetric quotients
    ``(|E(q+h)| + |E(q-h)|) / (2h)``.  ``n_x`` must be divisible by 3 so
    ``q_mu`` lies on the grid.
    """
    if n_x % 3:
        raise ConfigError("n_x must be divisible by 3 so that q_mu is a grid momentum")
    lat = LatticeSpec(epsilon, n_x, 0)
    kb = kernel_blocks_fast(lat, j)
    e = band_energies(kb.blocks)[:, -1]
    n0 = n_x // 3 if mu == 0 else n_x - n_x // 3

    def quotient(k):
        h = 2 * np.pi * k / (n_x * epsilon)
        return (e[(n0 + k) % n_x] + e[(n0 - k) % n_x] - 2 * e[n0]) / (2 * h)

    return float((4 * quotient(1) - quotient(2)) / 3)


@dataclass
class DispersionReport:
    """Low-energy dispersion near ``q_mu`` in relabelled momentum ``p``.

    ``energy`` is ``|E|`` per sector; ``energy_even`` the parity-averaged
    ``sqrt((E(p)^2 + E(-p)^2) / 2)``.  The fit is ``E^2 = slope p^2 + intercept``
    on the parity-averaged values.
    """

    p: np.ndarray
    energy: np.ndarray
    energy_even: np.ndarray
    slope: float
    intercept: float
    raw_velocity: float
    mass: float

    def relative_residual(self, averaged: bool = True) -> np.ndarray:
        e2 = self.energy_even ** 2 if averaged else self.energy ** 2
        target = self.p ** 2 + self.mass ** 2
        if e2.ndim > 1:
            target = target[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            res = np.abs(e2 - target) / target
        return np.where(target > 0, res, 0.0)


def low_energy_dispersion(m: float = 0.0, p_window: float = 0.1, n_x: int = 1200,
                          epsilon: float = 1.0, rescale: bool = True) -> DispersionReport:
    """Dispersion of ``J = 1, m0 = m`` near both zeros.

    ``rescale`` applies ``J -> J / sqrt(3)`` so the velocity is one.  Only
    momenta with ``|p| <= p_window / eps`` are kept.
    """
    if p_window / epsilon >= np.pi / (3 * epsilon):
        raise ConfigError("window overlaps both flavor sectors")
    if n_x % 3:
        raise ConfigError("n_x must be divisible by 3")
    j = 1 / np.sqrt(3) if rescale else 1.0
    lat = LatticeSpec(epsilon, n_x, 0)
    kb = kernel_blocks_fast(lat, j, m0=m)
    e = band_energies(kb.blocks)[:, -1]
    ks = np.arange(-n_x // 2, n_x // 2)
    p = 2 * np.pi * ks / (n_x * epsilon)
    keep = np.abs(p) <= p_window / epsilon + 1e-12
    ks, p = ks[keep], p[keep]
    centres = (n_x // 3, n_x - n_x // 3)
    energy = np.stack([e[(c + ks) % n_x] for c in centres], axis=1)
    flipped = np.stack([e[(c - ks) % n_x] for c in centres], axis=1)
    even = np.sqrt(0.5 * (energy ** 2 + flipped ** 2))
    coef = np.polyfit(p ** 2, even[:, 0] ** 2, 1)
    raw = raw_group_velocity(n_x, epsilon, j)
    return DispersionReport(p, energy, even, float(coef[0]), float(coef[1]), raw, m)


def kernel_linearization(mu: int, epsilon: float, j) -> np.ndarray:
    """``d/dp`` of the hopping block at ``q_mu``."""
    q = sector_centers(epsilon)[mu]
    return kernel_derivative(q, epsilon, j)


# --------------------------------------------------------------------------
# flavor sectors
# --------------------------------------------------------------------------


def default_window(epsilon: float) -> float:
    """``p_max = pi / (6 eps)``, half the sector separation."""
    return np.pi / (6 * epsilon)


def sector_indices(n_x: int, epsilon: float, p_max: Optional[float] = None):
    """Grid labels ``n`` with ``|p_n - q_mu| <= p_max`` for ``mu = 0, 1``."""
    p_max = default_window(epsilon) if p_max is None else p_max
    if p_max >= np.pi / (3 * epsilon):
        raise ConfigError("envelope windows overlap")
    p = 2 * np.pi * np.arange(n_x) / (n_x * epsilon)
    period = 2 * np.pi / epsilon
    out = []
    for q in sector_centers(epsilon):
        dist = np.abs((p - q + period / 2) % period - period / 2)
        out.append(np.nonzero(dist <= p_max + 1e-12)[0])
    return out


@dataclass
class FlavorCoupling:
    inter: float
    intra: float

    @property
    def ratio(self) -> float:
        return self.inter / self.intra if self.intra > 0 else float("inf")


def flavor_coupling_norm(f, n_x: int, epsilon: float,
                         p_max: Optional[float] = None) -> FlavorCoupling:
    """Inter- and intra-sector norms of ``h_f = sum_x f(x) a^dag_x a_x``.

    ``inter = ||P_0 h_f P_1||`` and ``intra = ||P_0 h_f P_0||`` in spectral
    norm, with ``P_mu`` the projector onto the envelope window of sector
    ``mu``.  The matrix element between grid momenta ``p_n, p_m`` is
    ``(1/n_x) sum_x f(x) exp(-i (p_n - p_m) x)``.  For the inter-sector block
    ``n != m`` always, so the constant part ``f(0)`` is subtracted first; a
    constant potential then gives exactly zero.
    """
    f = np.asarray(f, dtype=complex)
    if f.ndim == 1:
        f = f[:, None, None]
    d = f.shape[-1]
    w0, w1 = sector_indices(n_x, epsilon, p_max)
    spec_full = fft.fft(f, axis=0) / n_x
    spec_osc = fft.fft(f - f[0], axis=0) / n_x

    def block(spec, rows, cols):
        diff = (rows[:, None] - cols[None, :]) % n_x
        m = spec[diff]  # (r, c, d, d)
        return m.transpose(0, 2, 1, 3).reshape(len(rows) * d, len(cols) * d)

    inter = np.linalg.norm(block(spec_osc, w0, w1), 2)
    intra = np.linalg.norm(block(spec_full, w0, w0), 2)
    return FlavorCoupling(float(inter), float(intra))


def gaussian_potential(n_x: int, length: float, width: Optional[float] = None,
                       amplitude: float = 1.0, center: Optional[float] = None):
    """Gaussian bump of fixed physical width sampled at ``x = n L / n_x``."""
    width = length / 16 if width is None else width
    center = length / 2 if center is None else center
    x = np.arange(n_x) * length / n_x
    return amplitude * np.exp(-((x - center) ** 2) / (2 * width ** 2))


def is_slowly_varying(f, n_x, epsilon, threshold=1e-6) -> bool:
    """Windowed transfer spectrum at ``q_0 - q_1`` below ``threshold`` of the ``p = 0`` part."""
    return flavor_coupling_norm(f, n_x, epsilon).ratio < threshold


@dataclass
class EnvelopeDecomposition:
    envelopes: tuple
    weights: tuple
    residual: float

    def reconstruct(self, epsilon: float) -> np.ndarray:
        n_x = self.envelopes[0].shape[0]
        x = np.arange(n_x) * epsilon
        out = 0
        for env, q in zip(self.envelopes, sector_centers(epsilon)):
            phase = np.exp(1j * q * x).reshape((n_x,) + (1,) * (env.ndim - 1))
            out = out + env * phase
        return out


def envelope_decompose(state, epsilon: float, p_max: Optional[float] = None,
                       n_x: Optional[int] = None) -> EnvelopeDecomposition:
    """Split a one-particle wavefunction into the envelopes of the two sectors.

    ``state`` has shape ``(n_x,)`` or ``(n_x, m)`` (extra components such as
    species and flavor), or is a canonical one-particle vector of length
    ``2 D n_x`` when ``n_x`` is given.
    """
    a = np.asarray(state, dtype=complex)
    if n_x is not None and a.ndim == 1 and a.shape[0] != n_x:
        a = a.reshape(n_x, -1)
    n = a.shape[0]
    spec = fft.fft(a, axis=0, norm="ortho")
    total = float(np.sum(np.abs(spec) ** 2))
    x = (np.arange(n) * epsilon).reshape((n,) + (1,) * (a.ndim - 1))
    envs, weights = [], []
    for idx, q in zip(sector_indices(n, epsilon, p_max), sector_centers(epsilon)):
        windowed = np.zeros_like(spec)
        windowed[idx] = spec[idx]
        part = fft.ifft(windowed, axis=0, norm="ortho")
        envs.append(part * np.exp(-1j * q * x))
        weights.append(float(np.sum(np.abs(spec[idx]) ** 2)) / total if total else 0.0)
    return EnvelopeDecomposition(tuple(envs), tuple(weights),
                                 max(0.0, 1.0 - sum(weights)))
