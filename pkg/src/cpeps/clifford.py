"""Interpolated Clifford algebras between Lorentz and Euclidean signature, and action evaluators.

Index conventions
-----------------
Gamma matrices are stored with a lower index, ``gamma_mu(theta)``.  The base
set at ``theta = 0`` has upper-index values ``gamma^0 = sigma_z`` and
``gamma^1 = i sigma_y``, so the stored lower-index matrices are
``gamma_0 = sigma_z`` and ``gamma_1 = -i sigma_y``; ``gamma_5 = sigma_x``.
Coordinates are ``(x^0, x^1) = (t, x)``, matching axes ``-3`` and ``-2`` of a
:class:`~cpeps.fields.FieldConfiguration`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .exceptions import ConfigError, SingularityError
from .fields import (IDENTITY, SIGMA_X, SIGMA_Y, SIGMA_Z, FieldConfiguration,
                     gradients, rotate_plane)

SINGULAR_TOL = 1e-8

BASE_GAMMA0 = SIGMA_Z
BASE_GAMMA1 = -1j * SIGMA_Y
BASE_GAMMA5 = SIGMA_X
#: upper-index base matrices ``(gamma^0, gamma^1)``
BASE_UPPER = (SIGMA_Z, 1j * SIGMA_Y)

GAMMA5_CONVENTIONS = ("normalized", "literal")
TRANSFER_CONVENTIONS = ("literal", "rephased")


def _check_theta(theta):
    theta = float(theta)
    c2 = np.cos(2 * theta)
    if abs(c2) < SINGULAR_TOL:
        raise SingularityError(
            f"theta={theta!r} is at the signature change: |cos 2theta| = {abs(c2):.3g} < {SINGULAR_TOL}")
    return theta, c2


def metric(theta) -> np.ndarray:
    """``diag(cos 2theta / |cos 2theta|, -1)``.

    Raises
    ------
    SingularityError
        If ``|cos 2theta| < 1e-8``.
    """
    _, c2 = _check_theta(theta)
    return np.diag([np.sign(c2), -1.0])


@dataclass(frozen=True, eq=False)
class GammaSet:
    """Metric and lower-index gamma matrices at one value of ``theta``."""

    theta: float
    gamma0: np.ndarray
    gamma1: np.ndarray
    gamma5: np.ndarray
    eta: np.ndarray
    convention: str = "normalized"

    @property
    def lower(self):
        return (self.gamma0, self.gamma1)

    @property
    def upper(self):
        """``gamma^mu = eta^{mu nu} gamma_nu`` (``eta`` is its own inverse)."""
        inv = np.linalg.inv(self.eta)
        return tuple(sum(inv[m, n] * self.lower[n] for n in range(2)) for m in range(2))

    def clifford_residual(self) -> float:
        """Largest entry of ``{gamma_mu, gamma_nu} - 2 eta_{mu nu}``."""
        g = self.lower
        res = 0.0
        for m in range(2):
            for n in range(2):
                ac = g[m] @ g[n] + g[n] @ g[m]
                res = max(res, np.max(np.abs(ac - 2 * self.eta[m, n] * IDENTITY)))
        return float(res)

    def gamma5_residuals(self) -> dict:
        """Residuals of ``gamma_5^2 = 1``, ``{gamma_5, gamma_mu} = 0`` and hermiticity."""
        g5 = self.gamma5
        anti = max(np.max(np.abs(g5 @ g + g @ g5)) for g in self.lower)
        return {"square": float(np.max(np.abs(g5 @ g5 - IDENTITY))),
                "anticommute": float(anti),
                "hermitian": float(np.max(np.abs(g5 - g5.conj().T)))}


def gamma_family(theta, convention="normalized") -> GammaSet:
    """Interpolated gamma matrices.

    ``gamma_1(theta) = gamma_1``,
    ``gamma_0(theta) = (gamma_0 cos theta + i gamma_5 sin theta) / |cos 2theta|^(1/2)``.
    The ``"literal"`` ``gamma_5(theta) = (gamma_5 cos theta - i gamma_0 sin theta) /
    |cos 2theta|^(1/2)`` squares to ``sign(cos 2theta)``; the default
    ``"normalized"`` convention multiplies it by ``eta_00^(-1/2)`` (principal
    branch, a factor ``-i`` past the singularity) so that it squares to one on
    both sides.
    """
    if convention not in GAMMA5_CONVENTIONS:
        raise ConfigError(f"unknown gamma_5 convention {convention!r}")
    theta, c2 = _check_theta(theta)
    eta = metric(theta)
    c, s = np.cos(theta), np.sin(theta)
    norm = np.sqrt(abs(c2))
    g0 = (BASE_GAMMA0 * c + 1j * BASE_GAMMA5 * s) / norm
    g5 = (BASE_GAMMA5 * c - 1j * BASE_GAMMA0 * s) / norm
    if convention == "normalized":
        g5 = g5 / np.sqrt(complex(eta[0, 0]))
    return GammaSet(theta, g0, BASE_GAMMA1.copy(), g5, eta, convention)


@dataclass(frozen=True, eq=False)
class LorentzGroupElement:
    """``Lambda = exp(omega Sigma_01)`` and its vector representation ``V``.

    ``V[mu, nu]`` is ``V^mu_nu`` in ``Lambda^-1 gamma^mu Lambda = V^mu_nu gamma^nu``.
    """

    omega: float
    theta: float
    generator: np.ndarray
    matrix: np.ndarray
    vector: np.ndarray
    consistency: float

    @property
    def det(self):
        return complex(np.linalg.det(self.matrix))

    def unitarity_residual(self) -> float:
        return float(np.max(np.abs(self.matrix.conj().T @ self.matrix - IDENTITY)))


def sigma01(theta) -> np.ndarray:
    g = gamma_family(theta)
    return 0.25 * (g.gamma0 @ g.gamma1 - g.gamma1 @ g.gamma0)


def group_element(omega, theta) -> LorentzGroupElement:
    """Spinor group element and the vector matrix extracted from conjugation."""
    g = gamma_family(theta)
    gen = 0.25 * (g.gamma0 @ g.gamma1 - g.gamma1 @ g.gamma0)
    lam = expm(omega * gen)
    lam_inv = np.linalg.inv(lam)
    up, low = g.upper, g.lower
    # tr(gamma^mu gamma_nu) = 2 delta^mu_nu
    v = np.array([[0.5 * np.trace(lam_inv @ up[m] @ lam @ low[n]) for n in range(2)]
                  for m in range(2)])
    recon = max(np.max(np.abs(lam_inv @ up[m] @ lam - sum(v[m, n] * up[n] for n in range(2))))
                for m in range(2))
    if np.max(np.abs(v.imag)) < 1e-12:
        v = v.real
    return LorentzGroupElement(float(omega), float(theta), gen, lam, v, float(recon))


# ---------------------------------------------------------------- actions

def _mass_operator(m, cfg: FieldConfiguration):
    """Broadcast ``m`` to shape ``(n_t, n_x, F, F)``."""
    n_f = cfg.values.shape[0]
    n_t, n_x = cfg.shape
    m = np.asarray(m, dtype=complex)
    eye = np.eye(n_f)
    if m.ndim == 0:
        return np.broadcast_to(m * eye, (n_t, n_x, n_f, n_f))
    if m.shape == (n_t, n_x):
        return m[..., None, None] * eye
    if m.shape == (n_f, n_f):
        return np.broadcast_to(m, (n_t, n_x, n_f, n_f))
    if m.shape == (n_t, n_x, n_f, n_f):
        return m
    raise ConfigError(f"mass field of shape {m.shape} does not fit grid {cfg.values.shape}")


def _first_order_action(cfg, prefactor, kinetic, m, mass_matrix, derivative, weight=1.0):
    """``weight * int Psi^dag P [i K^nu d_nu - m M] Psi``.

    ``prefactor`` ``P``, ``kinetic = (K^0, K^1)`` and ``mass_matrix`` ``M`` act
    on the spinor index; ``m`` mixes flavors.
    """
    psi = cfg.values
    d_t, d_x = gradients(cfg, derivative)
    kin = (np.einsum("st,fabt->fabs", prefactor @ kinetic[0], d_t)
           + np.einsum("st,fabt->fabs", prefactor @ kinetic[1], d_x)) * 1j
    mass = _mass_operator(m, cfg)
    mpsi = np.einsum("abfg,st,gabt->fabs", mass, prefactor @ mass_matrix, psi)
    density = np.einsum("fabs,fabs->ab", psi.conj(), kin - mpsi)
    return complex(weight * density.sum() * cfg.cell)


def dirac_action(cfg: FieldConfiguration, m=0.0, derivative="spectral") -> complex:
    """Lorentz-subclass action ``int Psi-bar_j (i delta^{jk} dslash - m^{jk}) Psi_k``.

    ``Psi-bar = Psi^dagger gamma^0`` with ``gamma^0 = sigma_z``, ``gamma^1 = i sigma_y``.
    ``m`` may be a scalar, a flavor matrix, a spacetime field or both.
    """
    return _first_order_action(cfg, BASE_UPPER[0], BASE_UPPER, m, IDENTITY, derivative)


def general_action(cfg: FieldConfiguration, j, m0, sectors=None, derivative="spectral") -> complex:
    """Pre-subclass exponent ``int Psi^dag_j (-delta d_t + J^{jk}(t) s_mu sigma_x s_mu i d_x
    + m0^{jk}(x,t) sigma_z) Psi_k`` with ``s_mu = sigma_z^mu``.

    The path-integral weight is ``exp`` of this value.  ``j`` is a flavor
    matrix or an ``(n_t, F, F)`` array, ``m0`` follows the mass conventions of
    :func:`dirac_action`.  ``sectors`` gives ``mu`` per flavor row (default 0).
    With ``J = i``, ``m0 = -i m`` and all sectors ``0`` the value is
    ``i * dirac_action(cfg, m)``.
    """
    psi = cfg.values
    n_f = psi.shape[0]
    n_t, _ = cfg.shape
    sectors = np.zeros(n_f, dtype=int) if sectors is None else np.asarray(sectors, dtype=int)
    if sectors.shape != (n_f,) or not np.all(np.isin(sectors, (0, 1))):
        raise ConfigError("sectors must list 0 or 1 for each flavor row")
    j = np.asarray(j, dtype=complex)
    if j.ndim == 0:
        j = j * np.eye(n_f)
    if j.ndim == 2:
        j = np.broadcast_to(j, (n_t, n_f, n_f))
    if j.shape != (n_t, n_f, n_f):
        raise ConfigError(f"hopping field of shape {j.shape} does not fit grid")
    d_t, d_x = gradients(cfg, derivative)
    # sigma_z^mu sigma_x sigma_z^mu = (-1)^mu sigma_x
    sgn = np.where(sectors == 1, -1.0, 1.0)
    sx_dx = np.einsum("st,fabt->fabs", SIGMA_X, d_x) * sgn[:, None, None, None]
    hop = 1j * np.einsum("afg,gabs->fabs", j, sx_dx)
    mass = _mass_operator(m0, cfg)
    mz = np.einsum("abfg,st,gabt->fabs", mass, SIGMA_Z, psi)
    density = np.einsum("fabs,fabs->ab", psi.conj(), -d_t + hop + mz)
    return complex(density.sum() * cfg.cell)


def family_action(cfg: FieldConfiguration, m, theta, derivative="spectral",
                  convention="normalized") -> complex:
    """``int sqrt|det eta| Psi^dag gamma_0 [i eta^{mu nu} gamma_mu(theta) d_nu - m] Psi``.

    The prefactor ``gamma_0`` is the base matrix ``sigma_z``.  ``|det eta| = 1``
    on both sides of the singularity.
    """
    g = gamma_family(theta, convention)
    weight = np.sqrt(abs(np.linalg.det(g.eta)))
    return _first_order_action(cfg, BASE_GAMMA0, g.upper, m, IDENTITY, derivative, weight)


def euclidean_gamma5() -> np.ndarray:
    """``gamma^E_5 = -i gamma_0`` with the base ``gamma_0 = sigma_z``."""
    return -1j * BASE_GAMMA0


def euclidean_action(cfg: FieldConfiguration, m, derivative="spectral") -> complex:
    """``S_E = int Psi^dag (i gamma^E_5)(i dslash^E - m) Psi``.

    ``dslash^E = gamma^mu(pi/2) d_mu`` and ``i gamma^E_5 = sigma_z``.
    """
    g = gamma_family(np.pi / 2)
    return _first_order_action(cfg, 1j * euclidean_gamma5(), g.upper, m, IDENTITY, derivative)


def rotate_configuration(cfg: FieldConfiguration, alpha) -> FieldConfiguration:
    """Euclidean rotation ``Psi'(y) = Lambda_s Psi(V^-1 y)`` with ``Lambda_s = Lambda(alpha; pi/2)``.

    ``V`` is extracted from the spinor matrix, so the coordinate and spinor
    parts are rotated consistently.  Needs ``dt == dx`` and a square grid.
    """
    if not np.isclose(cfg.dt, cfg.dx):
        raise ConfigError("rotations need equal grid spacings")
    ge = group_element(alpha, np.pi / 2)
    return cfg.with_values(rotate_plane(cfg.values, ge.vector, ge.matrix))


# ------------------------------------------------------- transfer coefficients

def interpolated_transfer_coeffs(theta, epsilon, convention="literal"):
    """Coefficients ``(c_1, c_sigma_y, c_H)`` of the interpolated transfer operator.

    ``c_1 = cos theta / sqrt(cos 2theta)``, ``c_sigma_y = -sin theta / sqrt(cos 2theta)``,
    ``c_H = epsilon sqrt(cos 2theta) / sqrt|cos 2theta|`` with the principal
    complex square root.  ``"rephased"`` divides all three by the phase
    ``sqrt(cos 2theta) / sqrt|cos 2theta|`` so that ``c_H = epsilon``.
    """
    if convention not in TRANSFER_CONVENTIONS:
        raise ConfigError(f"unknown transfer convention {convention!r}")
    theta, c2 = _check_theta(theta)
    root = np.sqrt(complex(c2))
    coeffs = np.array([np.cos(theta) / root, -np.sin(theta) / root,
                       epsilon * root / np.sqrt(abs(c2))])
    if convention == "rephased":
        coeffs = coeffs / (root / np.sqrt(abs(c2)))
    return tuple(complex(c) for c in coeffs)


# ------------------------------------------------------------ current

@dataclass(frozen=True, eq=False)
class CurrentReport:
    current: np.ndarray
    divergence: np.ndarray

    @property
    def residual(self) -> float:
        return float(np.max(np.abs(self.divergence))) if self.divergence.size else 0.0

    @property
    def scale(self) -> float:
        return float(np.max(np.abs(self.current))) if self.current.size else 0.0


def conserved_current(cfg: FieldConfiguration, derivative="spectral") -> CurrentReport:
    """``j^mu = Psi-bar gamma^mu Psi`` (summed over flavors) and ``d_mu j^mu``."""
    psi = cfg.values
    bar = np.einsum("fabs,st->fabt", psi.conj(), BASE_UPPER[0])
    j = np.stack([np.einsum("fabs,st,fabt->ab", bar, g, psi) for g in BASE_UPPER])
    as_cfg = FieldConfiguration(np.stack([j[0], j[1]], axis=-1)[None], cfg.dt, cfg.dx)
    d_t, d_x = gradients(as_cfg, derivative)
    div = d_t[0, ..., 0] + d_x[0, ..., 1]
    return CurrentReport(j, div)


def plane_wave(n, length, mode_t, mode_x, mass, branch=+1, amplitude=1.0):
    """On-shell free Dirac plane wave ``u exp(-i(E t - p x))`` on an ``n x n`` periodic grid.

    ``p = 2 pi mode_x / length``; ``mode_t`` fixes ``E = 2 pi mode_t / length``
    and ``mass`` must satisfy ``E^2 = p^2 + m^2``.  ``branch`` is the sign of ``E``.
    """
    k = 2 * np.pi / length
    e, p = branch * k * mode_t, k * mode_x
    if not np.isclose(e * e, p * p + mass * mass):
        raise ConfigError("plane wave is not on shell")
    # (gamma^0 E - gamma^1 p - m) u = 0
    u = np.array([p, e - mass], dtype=complex)
    if np.allclose(u, 0):
        u = np.array([0.0, 1.0], dtype=complex) if e < 0 else np.array([1.0, 0.0], dtype=complex)
    u = amplitude * u / np.linalg.norm(u)
    h = length / n
    t, x = np.meshgrid(np.arange(n) * h, np.arange(n) * h, indexing="ij")
    phase = np.exp(-1j * (e * t - p * x))
    return phase[..., None] * u
