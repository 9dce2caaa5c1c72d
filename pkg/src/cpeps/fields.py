"""Sampled spinor field configurations, derivatives and rotations on periodic grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft

from .exceptions import ConfigError

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)


@dataclass(frozen=True, eq=False)
class FieldConfiguration:
    """Two-component spinor field ``Psi_{j_mu}(x, t)`` on a periodic grid.

    ``values`` has shape ``(n_flavors, n_t, n_x, 2)``; axis ``-3`` is time
    (or ``v``), axis ``-2`` is space (or ``u``).  ``dt`` and ``dx`` are the
    grid spacings.
    """

    values: np.ndarray
    dt: float
    dx: float

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.ndim == 3:
            v = v[None]
        if v.ndim != 4 or v.shape[-1] != 2:
            raise ConfigError("values must have shape (n_flavors, n_t, n_x, 2)")
        if not np.all(np.isfinite(v)):
            raise ConfigError("field samples must be finite")
        if self.dt <= 0 or self.dx <= 0:
            raise ConfigError("grid spacings must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape[1:3]

    @property
    def area(self) -> float:
        n_t, n_x = self.shape
        return n_t * self.dt * n_x * self.dx

    @property
    def cell(self) -> float:
        return self.dt * self.dx

    def with_values(self, values):
        return FieldConfiguration(values, self.dt, self.dx)

    def scaled(self, factor):
        return self.with_values(self.values * factor)

    def check_compatible(self, other: "FieldConfiguration"):
        if self.values.shape != other.values.shape or not np.isclose(self.dt, other.dt) \
                or not np.isclose(self.dx, other.dx):
            raise ConfigError("field configurations live on different grids")


def grid(n_t, n_x, dt, dx):
    """Coordinate arrays ``(T, X)`` of shape ``(n_t, n_x)``."""
    t = np.arange(n_t) * dt
    x = np.arange(n_x) * dx
    return np.meshgrid(t, x, indexing="ij")


def spectral_derivative(values, spacing, axis):
    """Periodic Fourier derivative along ``axis``; the Nyquist mode is dropped."""
    n = values.shape[axis]
    k = 2 * np.pi * fft.fftfreq(n, d=spacing)
    if n % 2 == 0:
        k[n // 2] = 0.0
    shape = [1] * values.ndim
    shape[axis] = n
    return fft.ifft(1j * k.reshape(shape) * fft.fft(values, axis=axis), axis=axis)


def central_derivative(values, spacing, axis):
    """Periodic second-order central difference along ``axis``."""
    return (np.roll(values, -1, axis=axis) - np.roll(values, 1, axis=axis)) / (2 * spacing)


def derivative(values, spacing, axis, mode="spectral"):
    if mode == "spectral":
        return spectral_derivative(values, spacing, axis)
    if mode == "central":
        return central_derivative(values, spacing, axis)
    raise ConfigError(f"unknown derivative mode {mode!r}")


def gradients(cfg: FieldConfiguration, mode="spectral"):
    """``(d/dt Psi, d/dx Psi)`` with the spinor index last."""
    return (derivative(cfg.values, cfg.dt, -3, mode),
            derivative(cfg.values, cfg.dx, -2, mode))


def rotation_matrix(alpha):
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array([[c, -s], [s, c]])


def rotate_plane(values, v, spinor=None):
    """Resample fields on a square periodic grid as ``Psi'(y) = S Psi(V^{-1} y)``.

    ``v`` is a real 2x2 matrix acting on the grid coordinates (first axis,
    second axis) about the origin index ``0``.  Quarter turns (integer ``v``)
    are exact index permutations modulo ``n``; other rotations evaluate the
    periodic Fourier interpolant at the source points, with coordinates
    taken in the symmetric window around the origin.  ``spinor`` is the 2x2
    matrix ``S`` acting on the last axis.
    """
    values = np.asarray(values, dtype=complex)
    v = np.asarray(v, dtype=float)
    n0, n1 = values.shape[-3], values.shape[-2]
    if n0 != n1:
        raise ConfigError("rotations need a square grid")
    n = n0
    vinv = np.linalg.inv(v)
    ints = np.round(vinv)
    y0, y1 = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    if np.allclose(vinv, ints, atol=1e-12):
        ints = ints.astype(int)
        s0 = (ints[0, 0] * y0 + ints[0, 1] * y1) % n
        s1 = (ints[1, 0] * y0 + ints[1, 1] * y1) % n
        out = values[..., s0, s1, :]
    else:
        c0 = np.where(y0 >= n / 2, y0 - n, y0).astype(float)
        c1 = np.where(y1 >= n / 2, y1 - n, y1).astype(float)
        x0 = vinv[0, 0] * c0 + vinv[0, 1] * c1
        x1 = vinv[1, 0] * c0 + vinv[1, 1] * c1
        k = 2 * np.pi * fft.fftfreq(n)
        spec = fft.fft2(values, axes=(-3, -2)) / (n * n)
        ph0 = np.exp(1j * np.multiply.outer(x0, k))
        ph1 = np.exp(1j * np.multiply.outer(x1, k))
        out = np.einsum("abk,abl,...klc->...abc", ph0, ph1, spec, optimize=True)
    if spinor is not None:
        out = np.einsum("st,...t->...s", np.asarray(spinor, dtype=complex), out)
    return out
