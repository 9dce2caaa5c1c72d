"""Single-particle coefficient matrices of the quadratic auxiliary operators.

A quadratic operator ``H = sum_pq h[p, q] c_p^dag c_q`` is represented by its
dense ``(2 D n_x) x (2 D n_x)`` matrix ``h`` in the canonical mode order of
:mod:`cpeps.model`.  The Fock engine lifts these to many-body operators and
the spectrum analysis diagonalises them directly.
"""

import numpy as np

from .model import LatticeSpec, mode_offset


def _blank(n_x, d):
    m = 2 * d * n_x
    return np.zeros((m, m), dtype=complex)


def _block(h, x, s, y, u, mat, d):
    i, k = mode_offset(x, s, 0, d), mode_offset(y, u, 0, d)
    h[i:i + d, k:k + d] += mat


def hop_counts(lattice: LatticeSpec) -> np.ndarray:
    """``c[x, y]`` = number of hops in ``{x-1, x, x+1}`` landing on ``y``.

    Periodic wraparound coincides hops on small rings (``n_x=1`` gives 3);
    open boundaries drop the wrapping pair.
    """
    n = lattice.n_x
    c = np.zeros((n, n))
    for x in range(n):
        for step in (-1, 0, 1):
            y = x + step
            if lattice.periodic:
                c[x, y % n] += 1
            elif 0 <= y < n:
                c[x, y] += 1
    return c


def hopping_matrix(lattice: LatticeSpec, j) -> np.ndarray:
    """Coefficients of ``(1/eps_x) sum_x J^{jk} (a^dag_{j,x} b_{k,x+s} + b^dag_{j,x} a_{k,x+s})``.

    The conjugate partner swaps the species and keeps ``J^{jk}`` and the flavor
    order, so the matrix is hermitian iff ``J`` is hermitian and
    anti-hermitian iff ``J`` is anti-hermitian.
    """
    j = np.atleast_2d(np.asarray(j, dtype=complex))
    d = j.shape[0]
    h = _blank(lattice.n_x, d)
    counts = hop_counts(lattice)
    for x, y in zip(*np.nonzero(counts)):
        w = counts[x, y] / lattice.epsilon_x
        _block(h, x, 0, y, 1, w * j, d)
        _block(h, x, 1, y, 0, w * j, d)
    return h


def mass_matrix(n_x: int, m0) -> np.ndarray:
    """Coefficients of ``sum_x m0^{jk}(x) (a^dag_j a_k - b^dag_j b_k)``.

    ``m0`` has shape ``(n_x, D, D)`` (or ``(D, D)`` for a constant field).
    """
    m0 = np.asarray(m0, dtype=complex)
    if m0.ndim == 2:
        m0 = np.broadcast_to(m0, (n_x,) + m0.shape)
    d = m0.shape[-1]
    h = _blank(n_x, d)
    for x in range(n_x):
        _block(h, x, 0, x, 0, m0[x], d)
        _block(h, x, 1, x, 1, -m0[x], d)
    return h


def density_matrix(n_x: int, x: int, r) -> np.ndarray:
    """Coefficients of ``R^{jk} (a^dag_{j,x} a_{k,x} + b^dag_{j,x} b_{k,x})`` at one site."""
    r = np.atleast_2d(np.asarray(r, dtype=complex))
    d = r.shape[0]
    h = _blank(n_x, d)
    _block(h, x, 0, x, 0, r, d)
    _block(h, x, 1, x, 1, r, d)
    return h


def onsite_matrix(n_x: int, f, species: str = "a") -> np.ndarray:
    """Coefficients of ``sum_x f^{jk}(x) c^dag_{j,x} c_{k,x}`` on one species."""
    f = np.asarray(f, dtype=complex)
    if f.ndim == 1:
        f = f[:, None, None]
    d = f.shape[-1]
    s = 0 if species == "a" else 1
    h = _blank(n_x, d)
    for x in range(n_x):
        _block(h, x, s, x, s, f[x], d)
    return h
