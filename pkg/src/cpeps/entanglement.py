"""Reduced states, entropies, Schmidt ranks and area-law scans of generated lattice states."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .exceptions import ConfigError, ResourceError
from .fock import DEFAULT_BUDGET_BYTES, PhysicalState

EIG_CUTOFF = 1e-14
PSD_TOL = 1e-10
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class Region:
    """A set of physical sites ``(x, t)`` of an ``n_x`` by ``n_t`` lattice.

    The boundary is the inner boundary: sites of the region with a lattice
    neighbour (one step in ``x`` or ``t``) outside it.  ``x`` is periodic when
    ``periodic_x`` is set; ``t`` is always open.
    """

    sites: frozenset
    n_x: int
    n_t: int
    periodic_x: bool = True

    def __post_init__(self):
        sites = frozenset((int(x), int(t)) for x, t in self.sites)
        object.__setattr__(self, "sites", sites)
        if not sites:
            raise ConfigError("region must not be empty", "region")
        if len(sites) >= self.n_x * self.n_t:
            raise ConfigError("region must be a proper subset of the lattice", "region")
        for x, t in sites:
            if not (0 <= x < self.n_x and 0 <= t < self.n_t):
                raise ConfigError(f"site {(x, t)} lies outside the lattice", "region")

    @classmethod
    def rectangle(cls, x0, width, t0, height, n_x, n_t, periodic_x=True):
        return cls(frozenset((x % n_x if periodic_x else x, t)
                             for x in range(x0, x0 + width) for t in range(t0, t0 + height)),
                   n_x, n_t, periodic_x)

    def neighbours(self, x, t):
        for dx, dt in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nx, nt = x + dx, t + dt
            if self.periodic_x:
                nx %= self.n_x
            if 0 <= nx < self.n_x and 0 <= nt < self.n_t and (nx, nt) != (x, t):
                yield nx, nt

    @property
    def boundary(self) -> frozenset:
        return frozenset(s for s in self.sites
                         if any(n not in self.sites for n in self.neighbours(*s)))

    @property
    def boundary_size(self) -> int:
        return len(self.boundary)

    @property
    def size(self) -> int:
        return len(self.sites)

    def modes(self) -> list:
        """Flat physical mode indices (``t * n_x + x``) in ascending order."""
        return sorted(t * self.n_x + x for x, t in self.sites)

    def complement(self) -> "Region":
        every = {(x, t) for x in range(self.n_x) for t in range(self.n_t)}
        return Region(frozenset(every - self.sites), self.n_x, self.n_t, self.periodic_x)


def _as_tensor(state, local_dim=None, n_modes=None):
    if isinstance(state, PhysicalState):
        return state.normalized.reshape((state.local_dim,) * state.n_modes)
    psi = np.asarray(state, dtype=complex)
    if local_dim is None:
        return psi
    psi = psi / np.linalg.norm(psi)
    return psi.reshape((local_dim,) * n_modes)


def _region_matrix(psi, modes):
    n = psi.ndim
    modes = list(modes)
    rest = [k for k in range(n) if k not in modes]
    t = np.transpose(psi, modes + rest)
    d_a = int(np.prod([psi.shape[k] for k in modes]))
    return t.reshape(d_a, -1)


def reduced_density(state, region, budget_bytes=DEFAULT_BUDGET_BYTES, local_dim=None,
                    n_modes=None) -> np.ndarray:
    """Partial trace of the normalised pure state onto the region's modes.

    ``state`` is a :class:`~cpeps.fock.PhysicalState`, or a tensor with one
    axis per mode (or a flat vector together with ``local_dim`` and
    ``n_modes``).  ``region`` is a :class:`Region` or a list of mode indices.
    """
    psi = _as_tensor(state, local_dim, n_modes)
    if local_dim is None and not isinstance(state, PhysicalState):
        psi = psi / np.linalg.norm(psi)
    modes = region.modes() if isinstance(region, Region) else list(region)
    d_a = int(np.prod([psi.shape[k] for k in modes]))
    need = 16 * d_a * d_a
    if need > budget_bytes:
        raise ResourceError(f"reduced density matrix needs {need} bytes",
                            required_bytes=need, budget_bytes=budget_bytes,
                            suggestion="use region_entropy, which works from Schmidt values")
    m = _region_matrix(psi, modes)
    rho = m @ m.conj().T
    return 0.5 * (rho + rho.conj().T)


def entropy(rho) -> float:
    """Von Neumann entropy in nats; eigenvalues below ``1e-14`` count as zero.

    Raises
    ------
    ConfigError
        If ``rho`` is not hermitian, has negative eigenvalues beyond ``1e-10``
        or does not have unit trace.
    """
    rho = np.asarray(rho, dtype=complex)
    if np.max(np.abs(rho - rho.conj().T), initial=0.0) > PSD_TOL:
        raise ConfigError("density matrix is not hermitian")
    if abs(np.trace(rho) - 1) > 1e-8:
        raise ConfigError(f"density matrix trace is {np.trace(rho).real:.6g}, expected 1")
    w = np.linalg.eigvalsh(rho)
    if w.min() < -PSD_TOL:
        raise ConfigError(f"density matrix has eigenvalue {w.min():.3g} < 0")
    return _entropy_from_probabilities(w)


def _entropy_from_probabilities(p) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > EIG_CUTOFF]
    return float(max(0.0, -np.sum(p * np.log(p))))


def schmidt_values(state, modes, local_dim=None, n_modes=None) -> np.ndarray:
    psi = _as_tensor(state, local_dim, n_modes)
    if local_dim is None and not isinstance(state, PhysicalState):
        psi = psi / np.linalg.norm(psi)
    return np.linalg.svd(_region_matrix(psi, modes), compute_uv=False)


def schmidt_rank(values) -> int:
    values = np.asarray(values)
    if values.size == 0 or values[0] == 0:
        return 0
    return int(np.sum(values > RANK_RTOL * values[0]))


@dataclass(frozen=True)
class EntropyReport:
    entropy: float
    rank: int
    region_size: int
    boundary_size: int
    epsilon: float
    rank_bound: Optional[int] = None

    @property
    def bound_constant(self) -> float:
        """Smallest ``c`` with ``S_A <= c |dA|`` for this region."""
        return self.entropy / self.boundary_size if self.boundary_size else float("nan")


def region_entropy(state: PhysicalState, region: Region, epsilon=1.0) -> EntropyReport:
    """Entropy and Schmidt rank of ``region`` from the Schmidt values of the pure state."""
    sv = schmidt_values(state, region.modes())
    return EntropyReport(entropy=_entropy_from_probabilities(sv ** 2), rank=schmidt_rank(sv),
                         region_size=region.size, boundary_size=region.boundary_size,
                         epsilon=epsilon)


@dataclass(frozen=True)
class CutRank:
    rank: int
    bound: int
    side_dims: tuple

    @property
    def within_bound(self) -> bool:
        return self.rank <= min(self.bound, *self.side_dims)


def temporal_cut_rank(state: PhysicalState, t0: int) -> CutRank:
    """Schmidt rank between slices ``t < t0`` and ``t >= t0``.

    The transfer-operator factorisation routes every correlation across the
    cut through the auxiliary space, so the rank is at most ``state.aux_dim``.
    """
    if not 0 <= t0 <= state.n_t:
        raise ConfigError(f"cut position {t0} outside 0..{state.n_t}")
    left = t0 * state.n_x
    d_left = state.local_dim ** left
    d_right = state.local_dim ** (state.n_modes - left)
    if state.norm == 0:
        return CutRank(0, state.aux_dim, (d_left, d_right))
    mat = state.normalized.reshape(d_left, d_right)
    sv = np.linalg.svd(mat, compute_uv=False)
    return CutRank(schmidt_rank(sv), state.aux_dim, (d_left, d_right))


@dataclass(frozen=True)
class AreaLawReport:
    rows: tuple

    @property
    def constant(self) -> float:
        """Fitted ``c``: the smallest constant with ``S_A <= c |dA|`` over the scan."""
        vals = [r.bound_constant for r in self.rows if r.boundary_size]
        return float(max(vals)) if vals else 0.0

    @property
    def subextensive(self) -> bool:
        """``S_A / |A|`` is non-increasing in ``|A|`` (averaged over equal sizes)."""
        sizes = sorted({r.region_size for r in self.rows})
        dens = [np.mean([r.entropy / r.region_size for r in self.rows if r.region_size == s])
                for s in sizes]
        return bool(np.all(np.diff(dens) <= 1e-12))

    def table(self):
        return [(r.region_size, r.boundary_size, r.entropy, r.rank) for r in self.rows]


def area_law_scan(state: PhysicalState, regions: Iterable[Region], epsilon=1.0) -> AreaLawReport:
    """Entropy against boundary size over a family of regions."""
    rows = tuple(region_entropy(state, reg, epsilon) for reg in regions)
    return AreaLawReport(rows)


def square_regions(n_x, n_t, sizes=None, t0=0, x0=0):
    """Nested ``k x k`` squares anchored at ``(x0, t0)``."""
    if sizes is None:
        sizes = range(1, min(n_x, n_t) + 1)
    return [Region.rectangle(x0, k, t0, k, n_x, n_t) for k in sizes
            if k * k < n_x * n_t]
