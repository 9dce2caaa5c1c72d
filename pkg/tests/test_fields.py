import numpy as np
import pytest
from hypothesis import given, strategies as st

from cpeps.exceptions import ConfigError
from cpeps.fields import (FieldConfiguration, central_derivative, derivative, grid,
                          rotate_plane, rotation_matrix, spectral_derivative)


def test_configuration_shapes():
    cfg = FieldConfiguration(np.zeros((4, 6, 2)), 0.5, 0.25)
    assert cfg.values.shape == (1, 4, 6, 2)
    assert cfg.shape == (4, 6)
    assert cfg.area == pytest.approx(4 * 0.5 * 6 * 0.25)
    assert not cfg.values.flags.writeable


@pytest.mark.parametrize("values,dt", [(np.zeros((2, 2, 3)), 1.0), (np.zeros((2, 2, 2)), 0.0),
                                       (np.full((1, 2, 2, 2), np.inf), 1.0)])
def test_configuration_rejects(values, dt):
    with pytest.raises(ConfigError):
        FieldConfiguration(values, dt, 1.0)


def test_compatibility():
    a = FieldConfiguration(np.zeros((2, 2, 2)), 1.0, 1.0)
    with pytest.raises(ConfigError):
        a.check_compatible(FieldConfiguration(np.zeros((2, 2, 2)), 1.0, 0.5))


@pytest.mark.parametrize("n", [16, 17])
def test_spectral_derivative_exact_on_modes(n):
    length = 3.0
    x = np.arange(n) * length / n
    k = 2 * np.pi * 3 / length
    f = np.exp(1j * k * x)
    assert np.allclose(spectral_derivative(f, length / n, 0), 1j * k * f)


def test_central_derivative_second_order():
    errs = []
    for n in (32, 64):
        h = 2 * np.pi / n
        x = np.arange(n) * h
        errs.append(np.max(np.abs(central_derivative(np.sin(x), h, 0) - np.cos(x))))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)


def test_derivative_mode():
    with pytest.raises(ConfigError):
        derivative(np.zeros(4), 1.0, 0, "forward")


def test_grid():
    t, x = grid(2, 3, 0.5, 0.1)
    assert t.shape == (2, 3) and t[1, 0] == 0.5 and x[0, 2] == pytest.approx(0.2)


@pytest.mark.parametrize("quarter", [1, 2, 3])
def test_quarter_turn_is_permutation(rng, quarter):
    vals = rng.normal(size=(1, 8, 8, 2))
    v = np.round(rotation_matrix(quarter * np.pi / 2))
    out = rotate_plane(vals, v)
    assert np.allclose(np.sort(out.ravel()), np.sort(vals.ravel()))
    back = rotate_plane(out, v.T)
    assert np.array_equal(back, vals)


def test_quarter_turn_direction():
    vals = np.zeros((1, 4, 4, 1))
    vals[0, 1, 0, 0] = 1.0  # point at coordinates (1, 0)
    out = rotate_plane(vals, np.array([[0, -1], [1, 0]]))
    # the point is carried to V (1, 0) = (0, 1)
    assert out[0, 0, 1, 0] == 1.0


@given(st.floats(-np.pi, np.pi))
def test_interpolated_rotation_of_band_limited_field(alpha):
    n = 32
    c = np.where(np.arange(n) >= n / 2, np.arange(n) - n, np.arange(n)).astype(float)
    a0, a1 = np.meshgrid(c, c, indexing="ij")
    width = 3.0
    vals = np.exp(-(a0 ** 2 + a1 ** 2) / (2 * width ** 2))[None, ..., None]
    out = rotate_plane(vals, rotation_matrix(alpha))
    # a centred isotropic Gaussian is invariant; outside the inscribed disk
    # the source points wrap onto the periodic image
    disk = a0 ** 2 + a1 ** 2 < (n / 2) ** 2
    assert np.max(np.abs(out - vals)[0, disk]) < 1e-6


def test_rotation_needs_square_grid():
    with pytest.raises(ConfigError):
        rotate_plane(np.zeros((1, 4, 6, 2)), np.eye(2))


def test_spinor_applied():
    vals = np.ones((1, 4, 4, 2))
    out = rotate_plane(vals, np.eye(2), spinor=np.diag([2.0, -1.0]))
    assert np.allclose(out[..., 0], 2) and np.allclose(out[..., 1], -1)
