"""One-dimensional continuous MPS on a finite interval.

The state is generated by the path-ordered exponential of
``-i K (x) 1 + R (x) psi^dag - R^dag (x) psi`` on the interval ``[0, l]``.
Discretising into ``n_steps`` modes of width ``delta = l / n_steps`` with
``psi^dag ~ a^dag / sqrt(delta)`` gives one MPS tensor per mode.

Occupation patterns are stored C-order with the earliest mode most
significant, as in :mod:`cpeps.fock`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import BarycentricInterpolator
from scipy.linalg import expm

from . import grassmann
from .exceptions import ConfigError, ResourceError
from .fock import DEFAULT_BUDGET_BYTES

HERMITICITY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CmpsData:
    """Parameters of a finite-interval cMPS.

    ``k`` must be hermitian; ``schedule`` lists the step counts used for
    refinement studies (``n_steps`` is the working value).
    """

    k: np.ndarray
    r1: np.ndarray
    omega_l: np.ndarray
    omega_r: np.ndarray
    length: float = 1.0
    n_steps: int = 8
    statistics: str = "fermionic"
    n_max: int = 2
    schedule: tuple = (8, 16, 32, 64)

    def __post_init__(self):
        k = np.atleast_2d(np.array(self.k, dtype=complex))
        r = np.atleast_2d(np.array(self.r1, dtype=complex))
        ol = np.atleast_1d(np.array(self.omega_l, dtype=complex))
        orr = np.atleast_1d(np.array(self.omega_r, dtype=complex))
        d = k.shape[0]
        if k.shape != (d, d) or r.shape != (d, d):
            raise ConfigError("K and R must be square matrices of equal size")
        if ol.shape != (d,) or orr.shape != (d,):
            raise ConfigError(f"boundary vectors need {d} components")
        if not all(np.all(np.isfinite(a)) for a in (k, r, ol, orr)):
            raise ConfigError("entries must be finite")
        if np.max(np.abs(k - k.conj().T)) > HERMITICITY_TOL:
            raise ConfigError("K must be hermitian")
        if not np.any(ol) or not np.any(orr):
            raise ConfigError("boundary vectors must be nonzero")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ConfigError("n_steps must be an integer >= 1")
        if self.length <= 0:
            raise ConfigError("length must be positive")
        if self.statistics not in ("fermionic", "bosonic"):
            raise ConfigError("statistics must be fermionic or bosonic")
        if self.n_max < 1:
            raise ConfigError("n_max must be >= 1")
        for name, arr in (("k", k), ("r1", r), ("omega_l", ol), ("omega_r", orr)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "schedule", tuple(int(n) for n in self.schedule))

    @property
    def d(self) -> int:
        return self.k.shape[0]

    @property
    def delta(self) -> float:
        return self.length / self.n_steps

    def with_steps(self, n_steps: int) -> "CmpsData":
        from dataclasses import replace
        return replace(self, n_steps=n_steps)


@dataclass
class CmpsState:
    """Unnormalised discretised physical state.

    ``amplitudes`` has ``(n_max + 1) ** n_steps`` entries.
    """

    amplitudes: np.ndarray
    n_steps: int
    n_max: int
    delta: float
    meta: dict = field(default_factory=dict)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def normalized(self) -> np.ndarray:
        nrm = self.norm
        return self.amplitudes / nrm if nrm > 0 else self.amplitudes

    def amplitude(self, pattern: Sequence[int]) -> complex:
        return complex(self.amplitudes[np.ravel_multi_index(tuple(pattern),
                                                            (self.n_max + 1,) * self.n_steps)])


def step_generator(cmps: CmpsData, delta: float, n_max: int) -> np.ndarray:
    """``delta (-i K (x) 1) + sqrt(delta) (R (x) a^dag - R^dag (x) a)``.

    Acts on ``aux (x) mode`` with the mode truncated at ``n_max``; rows are
    ``aux * (n_max + 1) + n``.
    """
    n = np.arange(1, n_max + 1)
    create = np.diag(np.sqrt(n), k=-1).astype(complex)
    eye_m = np.eye(n_max + 1)
    return (delta * np.kron(-1j * cmps.k, eye_m)
            + np.sqrt(delta) * (np.kron(cmps.r1, create)
                                - np.kron(cmps.r1.conj().T, create.conj().T)))


def step_tensors(cmps: CmpsData, delta: float, n_max: int = 1, mode: str = "first"):
    """MPS tensors ``A^n`` (``n = 0..n_max``) for one discretisation step.

    ``mode="first"`` is the first-order step ``A^0 = 1 - i delta K``,
    ``A^1 = sqrt(delta) R`` and ``A^n = 0`` for ``n >= 2``; ``mode="exp"``
    takes ``A^n = <n| expm(G) |0>`` of the full step generator.
    """
    if delta <= 0:
        raise ConfigError("delta must be positive")
    d = cmps.d
    if mode == "first":
        out = [np.eye(d) - 1j * delta * cmps.k, np.sqrt(delta) * cmps.r1]
        out += [np.zeros((d, d), dtype=complex)] * (n_max - 1)
        return out[: n_max + 1]
    if mode == "exp":
        u = expm(step_generator(cmps, delta, n_max)).reshape(d, n_max + 1, d, n_max + 1)
        return [u[:, n, :, 0] for n in range(n_max + 1)]
    raise ConfigError(f"unknown step mode {mode!r}")


def discretize_step(cmps: CmpsData, delta: float, mode: str = "first"):
    """Occupation-0 and occupation-1 tensors ``(A0, A1)`` of one step."""
    a = step_tensors(cmps, delta, n_max=1 if mode == "first" else max(cmps.n_max, 1),
                     mode=mode)
    return a[0], a[1]


def path_ordered_state(cmps: CmpsData, n_max: Optional[int] = None, mode: str = "first",
                       budget_bytes: int = DEFAULT_BUDGET_BYTES) -> CmpsState:
    """Amplitudes ``<omega_L| A^{n_N} ... A^{n_1} |omega_R>`` for all patterns."""
    n_max = cmps.n_max if n_max is None else n_max
    n, d = cmps.n_steps, cmps.d
    need = 16 * 2 * d * (n_max + 1) ** n
    if need > budget_bytes:
        fit = max((m for m in range(1, n + 1) if 32 * d * (n_max + 1) ** m <= budget_bytes),
                  default=0)
        raise ResourceError(f"cMPS state needs {need} bytes", need, budget_bytes,
                            f"largest admissible n_steps at n_max={n_max}: {fit}")
    tensors = step_tensors(cmps, cmps.delta, n_max, mode)
    psi = cmps.omega_r.reshape(d, 1)
    for _ in range(n):
        psi = np.stack([a @ psi for a in tensors], axis=-1).reshape(d, -1)
    amps = cmps.omega_l.conj() @ psi
    return CmpsState(np.asarray(amps).ravel(), n, n_max, cmps.delta, {"mode": mode})


# --------------------------------------------------------------------------
# observables
# --------------------------------------------------------------------------


def transfer_matrices(cmps: CmpsData, delta: float, n_max: int, mode: str = "first"):
    """``E = sum_n A^n (x) conj(A^n)`` and ``E_N = sum_n n A^n (x) conj(A^n)``."""
    tensors = step_tensors(cmps, delta, n_max, mode)
    e = sum(np.kron(a, a.conj()) for a in tensors)
    en = sum(n * np.kron(a, a.conj()) for n, a in enumerate(tensors))
    return e, en


def density(cmps: CmpsData, n_steps: Optional[int] = None, n_max: Optional[int] = None,
            mode: str = "first") -> float:
    """Average particle density ``<psi^dag psi>`` over the interval."""
    n = cmps.n_steps if n_steps is None else n_steps
    n_max = cmps.n_max if n_max is None else n_max
    delta = cmps.length / n
    e, en = transfer_matrices(cmps, delta, n_max, mode)
    left = np.kron(cmps.omega_l, cmps.omega_l.conj())
    right = np.kron(cmps.omega_r, cmps.omega_r.conj())
    # powers[k] = E^k |R>
    powers = [right]
    for _ in range(n):
        powers.append(e @ powers[-1])
    norm = left.conj() @ powers[n]
    lefts = [left.conj()]
    for _ in range(n):
        lefts.append(lefts[-1] @ e)
    total = sum(lefts[n - 1 - j] @ (en @ powers[j]) for j in range(n))
    return float(np.real(total / norm)) / (n * delta)


def norm_squared(cmps: CmpsData, n_steps: Optional[int] = None,
                 n_max: Optional[int] = None, mode: str = "first") -> complex:
    n = cmps.n_steps if n_steps is None else n_steps
    n_max = cmps.n_max if n_max is None else n_max
    e, _ = transfer_matrices(cmps, cmps.length / n, n_max, mode)
    vec = np.kron(cmps.omega_r, cmps.omega_r.conj())
    for _ in range(n):
        vec = e @ vec
    return complex(np.kron(cmps.omega_l, cmps.omega_l.conj()).conj() @ vec)


def richardson(h: Sequence[float], values: Sequence[float]) -> float:
    """Polynomial extrapolation of ``values(h)`` to ``h = 0``."""
    return float(BarycentricInterpolator(np.asarray(h, float), np.asarray(values))(0.0))


def density_limit(cmps: CmpsData, schedule: Optional[Sequence[int]] = None,
                  n_max: Optional[int] = None, mode: str = "first"):
    """Densities over a refinement schedule and their Richardson limit."""
    schedule = tuple(schedule or cmps.schedule)
    vals = [density(cmps, n, n_max, mode) for n in schedule]
    hs = [cmps.length / n for n in schedule]
    return richardson(hs, vals), list(zip(schedule, hs, vals))


# --------------------------------------------------------------------------
# path-integral construction
# --------------------------------------------------------------------------

SIGN_MODES = {"minkowski": 1.0, "euclidean": 1j}


def _chain_steps(cmps: CmpsData, n_max: int):
    delta = cmps.delta
    step = grassmann.ChainStep(-1j * delta * cmps.k, [(1, np.sqrt(delta) * cmps.r1)],
                               n_max + 1)
    return [step] * cmps.n_steps


def bosonic_resolution(n_modes: int, n_particles: int = 1) -> np.ndarray:
    """Resolution of identity on a bosonic sector from Gaussian moments.

    Entry ``(S, T)`` is ``int d mu exp(-|phi|^2) c_S(phi) conj(c_T(phi))`` with
    ``c_S = prod_k phi_k^{S_k} / sqrt(S_k!)``, i.e. the product of
    :func:`cpeps.grassmann.gaussian_moment` factors.
    """
    from .fock import occupation_patterns

    states = np.array(list(occupation_patterns(n_modes, n_particles, n_particles)))
    dim = len(states)
    out = np.zeros((dim, dim))
    for s in range(dim):
        for t in range(dim):
            val = 1.0
            for a, b in zip(states[s], states[t]):
                val *= grassmann.gaussian_moment(int(a), int(b)) / np.sqrt(
                    factorial(int(a)) * factorial(int(b)))
            out[s, t] = val
    return out


def path_integral_state_1d(cmps: CmpsData, n_max: Optional[int] = None,
                           sign_mode: Optional[str] = None) -> CmpsState:
    """The discretised cMPS from coherent-state resolutions of identity.

    Fermionic: one Grassmann resolution per slice boundary, Berezin-integrated
    exactly with the normal-ordered step symbol.  Bosonic: the resolutions
    reduce to the Gaussian moment identity (:func:`bosonic_resolution`) and
    are composed with the step matrices.

    ``sign_mode`` (fermionic only) switches to the action form of the
    weight, ``exp(i S)`` for ``"minkowski"`` or ``exp(-S)`` for
    ``"euclidean"`` with the same lattice action ``S``; this reproduces the
    state only up to discretisation error, and only for the matching sign.
    """
    n_max = cmps.n_max if n_max is None else n_max
    d = cmps.d
    if cmps.statistics == "fermionic":
        states = np.eye(d, dtype=np.int64)
        if sign_mode is None:
            amps = grassmann.contract_chain(d, _chain_steps(cmps, n_max), states,
                                            cmps.omega_l, cmps.omega_r)
        else:
            if sign_mode not in SIGN_MODES:
                raise ConfigError(f"unknown sign mode {sign_mode!r}")
            amps = grassmann.contract_chain(d, _chain_steps(cmps, n_max), states,
                                            cmps.omega_l, cmps.omega_r, exponentiated=True,
                                            scale=SIGN_MODES[sign_mode])
        return CmpsState(amps, cmps.n_steps, n_max, cmps.delta,
                         {"route": "grassmann", "sign_mode": sign_mode})
    if sign_mode not in (None, "minkowski"):
        raise ConfigError("bosonic weights exp(-S) with an imaginary kinetic term are not "
                          "absolutely integrable; only the minkowski sign is defined")
    res = bosonic_resolution(d, 1)
    tensors = step_tensors(cmps, cmps.delta, n_max, "first")
    psi = (res @ cmps.omega_r).reshape(d, 1)
    for _ in range(cmps.n_steps):
        psi = np.stack([res @ (a @ psi) for a in tensors], axis=-1).reshape(d, -1)
    amps = cmps.omega_l.conj() @ psi
    return CmpsState(np.asarray(amps).ravel(), cmps.n_steps, n_max, cmps.delta,
                     {"route": "moments"})


def select_sign_mode(cmps: CmpsData, n_max: Optional[int] = None):
    """Compare both exponent sign conventions against the path-ordered state.

    Returns ``(selected, deviations, ray_deviations)``.  ``deviations`` is the
    relative max amplitude deviation per mode; ``ray_deviations`` is the same
    after removing the best global phase, i.e. the distance between the
    physical rays.
    """
    ref = path_ordered_state(cmps, n_max).amplitudes
    scale = np.max(np.abs(ref))
    devs, rays = {}, {}
    for mode in SIGN_MODES:
        try:
            amps = path_integral_state_1d(cmps, n_max, sign_mode=mode).amplitudes
        except ConfigError:
            devs[mode] = rays[mode] = float("nan")
            continue
        devs[mode] = float(np.max(np.abs(amps - ref)) / scale)
        ov = np.vdot(amps, ref)
        phase = ov / abs(ov) if abs(ov) > 0 else 1.0
        rays[mode] = float(np.max(np.abs(amps * phase - ref)) / scale)
    finite = {k: v for k, v in devs.items() if np.isfinite(v)}
    return min(finite, key=finite.get), devs, rays
