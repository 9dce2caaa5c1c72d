"""Model parameters, lattice geometry, mode ordering and configuration validation.

Everything here is immutable once constructed.  Arrays held by the dataclasses
are flagged read-only so specs can be shared between workers without copying.

Mode order
----------
Auxiliary modes are labelled by :class:`ModeIndex` ``(x, species, flavor)``.
The canonical order is x-major, then species ``a < b``, then flavor, and the
flat offset of a mode is ``(2 * x + s) * D + j`` with ``s = 0`` for ``a`` and
``s = 1`` for ``b``.  Fermionic sign conventions everywhere derive from this
order.  Flavors are 0-based.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Mapping, NamedTuple, Optional

import numpy as np

from .exceptions import ConfigError

SCHEMA_VERSION = 1
SPECIES = ("a", "b")
THETA_SINGULAR_TOL = 1e-8


def _frozen(arr):
    arr = np.array(arr, dtype=complex)
    arr.setflags(write=False)
    return arr


# --------------------------------------------------------------------------
# geometry
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LatticeSpec:
    """Space-time lattice: ``n_x`` spatial sites, ``n_t`` transfer steps.

    ``epsilon`` is the temporal spacing, ``epsilon_x`` the spatial one
    (defaults to ``epsilon``).  Units have hbar = 1.
    """

    epsilon: float
    n_x: int
    n_t: int
    epsilon_x: Optional[float] = None
    bc: str = "periodic"

    def __post_init__(self):
        if self.epsilon_x is None:
            object.__setattr__(self, "epsilon_x", self.epsilon)
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise ConfigError("epsilon must be positive", "lattice.epsilon")
        if not (np.isfinite(self.epsilon_x) and self.epsilon_x > 0):
            raise ConfigError("epsilon_x must be positive", "lattice.epsilon_x")
        if int(self.n_x) != self.n_x or self.n_x < 1:
            raise ConfigError("n_x must be an integer >= 1", "lattice.n_x")
        if int(self.n_t) != self.n_t or self.n_t < 0:
            raise ConfigError("n_t must be an integer >= 0", "lattice.n_t")
        if self.bc not in ("periodic", "open"):
            raise ConfigError("bc must be 'periodic' or 'open'", "lattice.bc")
        object.__setattr__(self, "n_x", int(self.n_x))
        object.__setattr__(self, "n_t", int(self.n_t))

    @property
    def l(self) -> float:
        """Total time extent ``n_t * epsilon``."""
        return self.n_t * self.epsilon

    @property
    def periodic(self) -> bool:
        return self.bc == "periodic"

    def positions(self) -> np.ndarray:
        return np.arange(self.n_x) * self.epsilon_x

    def times(self) -> np.ndarray:
        return np.arange(self.n_t) * self.epsilon


def momentum_grid(n_x: int, epsilon: float, bc: str = "periodic") -> np.ndarray:
    """Reciprocal lattice ``p_n = 2 pi n / (n_x epsilon)``, ``n = 0..n_x-1``.

    Values are folded into the symmetric window ``(-pi/epsilon, pi/epsilon]``
    and keep the order of ``n``.

    Raises
    ------
    ConfigError
        For open boundary conditions, where the discrete Fourier analysis
        does not apply.
    """
    if bc != "periodic":
        raise ConfigError("momentum grid requires periodic boundary conditions", "lattice.bc")
    if n_x < 1 or epsilon <= 0:
        raise ConfigError("momentum grid needs n_x >= 1 and epsilon > 0")
    n = np.arange(n_x)
    # fold on the integer label so the window edge is exact
    n = np.where(2 * n > n_x, n - n_x, n)
    return 2 * np.pi * n / (n_x * epsilon)


# --------------------------------------------------------------------------
# modes
# --------------------------------------------------------------------------


class ModeIndex(NamedTuple):
    """Label of one auxiliary mode; ``sector`` is set only for envelope modes."""

    x: int
    species: str
    flavor: int
    sector: Optional[int] = None

    def sort_key(self):
        return (self.x, SPECIES.index(self.species), self.flavor,
                -1 if self.sector is None else self.sector)

    def offset(self, d: int) -> int:
        return mode_offset(self.x, self.species, self.flavor, d)


def mode_offset(x: int, species, flavor: int, d: int) -> int:
    s = species if isinstance(species, int) else SPECIES.index(species)
    return (2 * x + s) * d + flavor


def canonical_modes(n_x: int, d: int) -> tuple:
    return tuple(ModeIndex(x, s, j) for x in range(n_x) for s in SPECIES for j in range(d))


def sector_dimension(n_modes: int, n_particles: int, statistics: str = "fermionic",
                     cutoff: Optional[int] = None) -> int:
    """Exact number of occupation patterns with ``n_particles`` in ``n_modes``."""
    if n_particles < 0:
        return 0
    if statistics == "fermionic":
        return math.comb(n_modes, n_particles)
    c = n_particles if cutoff is None else min(cutoff, n_particles)
    return _bounded_compositions(n_modes, n_particles, c)


@lru_cache(maxsize=None)
def _bounded_compositions(n_modes, total, cap):
    if n_modes == 0:
        return 1 if total == 0 else 0
    return sum(_bounded_compositions(n_modes - 1, total - k, cap)
               for k in range(0, min(cap, total) + 1))


# --------------------------------------------------------------------------
# couplings and boundaries
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CouplingFields:
    """Coupling tables sampled on the lattice.

    Shapes: ``j`` is ``(n_t, D, D)``, ``m0`` and ``r`` are ``(n_t, n_x, D, D)``
    and the optional on-site perturbation ``f`` is ``(n_x, D, D)``.
    """

    d: int
    j: np.ndarray
    m0: np.ndarray
    r: np.ndarray
    f: Optional[np.ndarray] = None

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ConfigError("D must be an integer >= 1", "couplings.d")
        for name in ("j", "m0", "r", "f"):
            val = getattr(self, name)
            if val is None:
                continue
            arr = _frozen(val)
            if arr.shape[-2:] != (self.d, self.d):
                raise ConfigError(f"matrices must be {self.d}x{self.d}", f"couplings.{name}")
            if not np.all(np.isfinite(arr)):
                raise ConfigError("matrix entries must be finite", f"couplings.{name}")
            object.__setattr__(self, name, arr)

    @classmethod
    def constant(cls, lattice: LatticeSpec, d: int = 1, j=0.0, m0=0.0, r=0.0, f=None):
        """Translation-invariant couplings; scalars mean multiples of the identity."""
        n_t = max(lattice.n_t, 1)

        def mat(v):
            v = np.asarray(v, dtype=complex)
            return v * np.eye(d) if v.ndim == 0 else v

        jj = np.broadcast_to(mat(j), (n_t, d, d))
        mm = np.broadcast_to(mat(m0), (n_t, lattice.n_x, d, d))
        rr = np.broadcast_to(mat(r), (n_t, lattice.n_x, d, d))
        ff = None if f is None else np.broadcast_to(mat(f), (lattice.n_x, d, d))
        return cls(d, jj, mm, rr, ff)

    def smoothness(self, periodic: bool = True) -> float:
        """Largest entrywise change between neighbouring lattice points."""
        score = 0.0
        for arr, axes in ((self.j, (0,)), (self.m0, (0, 1)), (self.r, (0, 1)),
                          (self.f, (0,))):
            if arr is None:
                continue
            for ax in axes:
                if arr.shape[ax] < 2:
                    continue
                diff = np.abs(np.diff(arr, axis=ax))
                score = max(score, float(diff.max()))
                if periodic and (arr is self.f or ax == 1):
                    wrap = np.abs(np.take(arr, 0, axis=ax) - np.take(arr, -1, axis=ax))
                    score = max(score, float(wrap.max()))
        return score

    def at(self, t: int):
        """Coupling slices ``(J, m0, R)`` used by the transfer step at index ``t``."""
        t = min(t, self.j.shape[0] - 1)
        return self.j[t], self.m0[t], self.r[t]


@dataclass(frozen=True, eq=False)
class BoundaryVectors:
    """Boundary states in the auxiliary particle-number sector ``n_aux``.

    The vectors are indexed by the sector basis of
    :class:`cpeps.fock.AuxFockBasis`.
    """

    omega_l: np.ndarray
    omega_r: np.ndarray
    n_aux: int

    def __post_init__(self):
        ol, orr = _frozen(self.omega_l), _frozen(self.omega_r)
        if ol.ndim != 1 or ol.shape != orr.shape:
            raise ConfigError("omega_l and omega_r must be vectors of equal length",
                              "boundary")
        if not (np.all(np.isfinite(ol)) and np.all(np.isfinite(orr))):
            raise ConfigError("boundary vectors must be finite", "boundary")
        if not np.any(ol) or not np.any(orr):
            raise ConfigError("boundary vectors must be nonzero", "boundary")
        object.__setattr__(self, "omega_l", ol)
        object.__setattr__(self, "omega_r", orr)


@dataclass(frozen=True)
class Statistics:
    aux: str = "fermionic"
    aux_cutoff: Optional[int] = None
    phys_cutoff: int = 1

    def __post_init__(self):
        if self.aux not in ("fermionic", "bosonic"):
            raise ConfigError("aux must be 'fermionic' or 'bosonic'", "statistics.aux")
        if self.aux_cutoff is not None and self.aux_cutoff < 1:
            raise ConfigError("aux_cutoff must be >= 1", "statistics.aux_cutoff")
        if self.phys_cutoff < 1:
            raise ConfigError("phys_cutoff must be >= 1", "statistics.phys_cutoff")


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Validated model: lattice, couplings, boundary data and statistics.

    ``boundary=None`` selects the default uniform single-a-particle states.
    """

    lattice: LatticeSpec
    couplings: CouplingFields
    boundary: Optional[BoundaryVectors] = None
    statistics: Statistics = field(default_factory=Statistics)
    theta: Optional[float] = None
    cmps: Any = None
    source_hash: str = ""

    def __post_init__(self):
        lat, cp = self.lattice, self.couplings
        n_t = max(lat.n_t, 1)
        if cp.j.shape[0] != n_t:
            raise ConfigError(f"j needs {n_t} time slices", "couplings.j")
        for name in ("m0", "r"):
            if getattr(cp, name).shape[:2] != (n_t, lat.n_x):
                raise ConfigError(f"{name} needs shape ({n_t}, {lat.n_x}, D, D)",
                                  f"couplings.{name}")
        if cp.f is not None and cp.f.shape[0] != lat.n_x:
            raise ConfigError(f"f needs {lat.n_x} sites", "couplings.f")
        if self.theta is not None:
            c2 = math.cos(2 * self.theta)
            if abs(c2) < THETA_SINGULAR_TOL:
                raise ConfigError("|cos 2 theta| < 1e-8: metric continuation is singular",
                                  "theta")
        if self.boundary is not None:
            dim = sector_dimension(self.n_aux_modes, self.boundary.n_aux,
                                   self.statistics.aux, self.statistics.aux_cutoff)
            if self.boundary.omega_l.shape[0] != dim:
                raise ConfigError(f"boundary vectors need {dim} components for the "
                                  f"n_aux={self.boundary.n_aux} sector", "boundary")

    @property
    def d(self) -> int:
        return self.couplings.d

    @property
    def n_aux_modes(self) -> int:
        return 2 * self.couplings.d * self.lattice.n_x

    @property
    def n_aux(self) -> int:
        return 1 if self.boundary is None else self.boundary.n_aux

    @property
    def modes(self) -> tuple:
        return canonical_modes(self.lattice.n_x, self.d)

    @property
    def momenta(self) -> Optional[np.ndarray]:
        if not self.lattice.periodic:
            return None
        return momentum_grid(self.lattice.n_x, self.lattice.epsilon_x)

    def replace(self, **changes) -> "ModelSpec":
        from dataclasses import replace
        return replace(self, **changes)


# --------------------------------------------------------------------------
# configuration parsing
# --------------------------------------------------------------------------

_TOP_KEYS = {"schema_version", "lattice", "couplings", "boundary", "statistics",
             "theta", "cmps"}
_LATTICE_KEYS = {"epsilon", "epsilon_x", "n_x", "n_t", "bc"}
_COUPLING_KEYS = {"d", "j", "m0", "r", "f"}
_BOUNDARY_KEYS = {"omega_l", "omega_r", "n_aux"}
_STAT_KEYS = {"aux", "aux_cutoff", "phys_cutoff"}
_CMPS_KEYS = {"d", "k", "r", "omega_l", "omega_r", "length", "n_steps", "statistics",
              "n_max"}


def _check_keys(obj, allowed, path):
    if not isinstance(obj, Mapping):
        raise ConfigError("expected an object", path)
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown}", path)


def parse_complex(value, path):
    """Turn nested ``[re, im]`` pairs into a complex array."""
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("expected nested arrays of [re, im] pairs", path) from None
    if arr.ndim == 0 or arr.shape[-1] != 2:
        raise ConfigError("expected nested arrays of [re, im] pairs", path)
    out = arr[..., 0] + 1j * arr[..., 1]
    if not np.all(np.isfinite(out)):
        raise ConfigError("entries must be finite", path)
    return out


def _preset_field(spec, lattice, d, kind, path):
    """Expand a named preset to a dense table.

    kind is 'time' for J (shape n_t,D,D), 'spacetime' for m0/R, 'space' for f.
    """
    _check_keys(spec, {"preset", "value", "matrix", "amplitude", "center", "width"}, path)
    preset = spec.get("preset")
    n_t = max(lattice.n_t, 1)
    if "matrix" in spec:
        base = parse_complex(spec["matrix"], f"{path}.matrix")
        if base.shape != (d, d):
            raise ConfigError(f"matrix must be {d}x{d}", f"{path}.matrix")
    else:
        base = np.eye(d, dtype=complex)
    if preset in ("constant", "zero"):
        val = 0.0 if preset == "zero" else parse_complex(spec.get("value", [1.0, 0.0]),
                                                         f"{path}.value")
        mat = complex(val) * base
        profile = np.ones(lattice.n_x)
    elif preset == "gaussian":
        if kind == "time":
            raise ConfigError("gaussian preset varies in x; not available for j", path)
        amp = complex(parse_complex(spec.get("amplitude", [1.0, 0.0]), f"{path}.amplitude"))
        length = lattice.n_x * lattice.epsilon_x
        center = float(spec.get("center", 0.5 * length))
        width = float(spec.get("width", length / 16))
        if width <= 0:
            raise ConfigError("width must be positive", f"{path}.width")
        x = lattice.positions()
        profile = np.exp(-((x - center) ** 2) / (2 * width ** 2))
        mat = amp * base
    else:
        raise ConfigError(f"unknown preset {preset!r}", f"{path}.preset")
    if kind == "time":
        return np.broadcast_to(mat, (n_t, d, d)).copy()
    table = profile[:, None, None] * mat
    if kind == "space":
        return table
    return np.broadcast_to(table, (n_t, lattice.n_x, d, d)).copy()


def _coupling_table(value, lattice, d, kind, path):
    n_t = max(lattice.n_t, 1)
    if isinstance(value, Mapping):
        return _preset_field(value, lattice, d, kind, path)
    arr = parse_complex(value, path)
    shapes = {"time": (n_t, d, d), "spacetime": (n_t, lattice.n_x, d, d),
              "space": (lattice.n_x, d, d)}
    if arr.shape == (d, d):
        return np.broadcast_to(arr, shapes[kind]).copy()
    if arr.shape != shapes[kind]:
        raise ConfigError(f"expected shape {(d, d)} or {shapes[kind]}, got {arr.shape}", path)
    return arr


def validate(raw: Mapping) -> ModelSpec:
    """Check a parsed configuration and build the immutable :class:`ModelSpec`.

    Raises :class:`ConfigError` naming the first violated invariant.
    """
    _check_keys(raw, _TOP_KEYS, "")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}", "schema_version")

    lat_raw = raw.get("lattice")
    if lat_raw is None:
        raise ConfigError("missing section", "lattice")
    _check_keys(lat_raw, _LATTICE_KEYS, "lattice")
    for key in ("epsilon", "n_x", "n_t"):
        if key not in lat_raw:
            raise ConfigError("missing value", f"lattice.{key}")
    lattice = LatticeSpec(epsilon=float(lat_raw["epsilon"]), n_x=lat_raw["n_x"],
                          n_t=lat_raw["n_t"],
                          epsilon_x=(None if lat_raw.get("epsilon_x") is None
                                     else float(lat_raw["epsilon_x"])),
                          bc=lat_raw.get("bc", "periodic"))

    cp_raw = raw.get("couplings", {})
    _check_keys(cp_raw, _COUPLING_KEYS, "couplings")
    d = cp_raw.get("d", 1)
    if not isinstance(d, int) or d < 1:
        raise ConfigError("D must be an integer >= 1", "couplings.d")
    zero = {"preset": "zero"}
    couplings = CouplingFields(
        d=d,
        j=_coupling_table(cp_raw.get("j", zero), lattice, d, "time", "couplings.j"),
        m0=_coupling_table(cp_raw.get("m0", zero), lattice, d, "spacetime", "couplings.m0"),
        r=_coupling_table(cp_raw.get("r", zero), lattice, d, "spacetime", "couplings.r"),
        f=(None if cp_raw.get("f") is None
           else _coupling_table(cp_raw["f"], lattice, d, "space", "couplings.f")),
    )

    st_raw = raw.get("statistics", {})
    _check_keys(st_raw, _STAT_KEYS, "statistics")
    statistics = Statistics(aux=st_raw.get("aux", "fermionic"),
                            aux_cutoff=st_raw.get("aux_cutoff"),
                            phys_cutoff=st_raw.get("phys_cutoff", 1))

    boundary = None
    b_raw = raw.get("boundary")
    if b_raw is not None:
        _check_keys(b_raw, _BOUNDARY_KEYS, "boundary")
        n_aux = b_raw.get("n_aux", 1)
        if not isinstance(n_aux, int) or n_aux < 0:
            raise ConfigError("n_aux must be a non-negative integer", "boundary.n_aux")
        if "omega_l" in b_raw or "omega_r" in b_raw:
            if not ("omega_l" in b_raw and "omega_r" in b_raw):
                raise ConfigError("give both omega_l and omega_r", "boundary")
            boundary = BoundaryVectors(parse_complex(b_raw["omega_l"], "boundary.omega_l"),
                                       parse_complex(b_raw["omega_r"], "boundary.omega_r"),
                                       n_aux)
        elif n_aux != 1:
            from .fock import AuxFockBasis, uniform_boundary
            basis = AuxFockBasis(lattice.n_x, d, n_aux, statistics.aux, statistics.aux_cutoff)
            boundary = uniform_boundary(basis)

    theta = raw.get("theta")
    if theta is not None:
        theta = float(theta)

    cmps = None
    if raw.get("cmps") is not None:
        cmps = _parse_cmps(raw["cmps"])

    blob = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    return ModelSpec(lattice=lattice, couplings=couplings, boundary=boundary,
                     statistics=statistics, theta=theta, cmps=cmps,
                     source_hash=hashlib.sha256(blob).hexdigest()[:16])


def _parse_cmps(c_raw):
    from .cmps import CmpsData

    _check_keys(c_raw, _CMPS_KEYS, "cmps")
    d = c_raw.get("d", 1)
    k = parse_complex(c_raw.get("k", [[[0.0, 0.0]] * d] * d), "cmps.k")
    r = parse_complex(c_raw.get("r", [[[0.0, 0.0]] * d] * d), "cmps.r")
    ones = [[1.0, 0.0]] * d
    ol = parse_complex(c_raw.get("omega_l", ones), "cmps.omega_l")
    orr = parse_complex(c_raw.get("omega_r", ones), "cmps.omega_r")
    n_steps = c_raw.get("n_steps", [8, 16, 32, 64])
    if isinstance(n_steps, int):
        n_steps = [n_steps]
    try:
        return CmpsData(k=k, r1=r, omega_l=ol, omega_r=orr,
                        length=float(c_raw.get("length", 1.0)),
                        n_steps=int(n_steps[0]),
                        statistics=c_raw.get("statistics", "fermionic"),
                        n_max=int(c_raw.get("n_max", 2)),
                        schedule=tuple(int(n) for n in n_steps))
    except ConfigError as exc:
        raise ConfigError(str(exc), "cmps") from None


def load_config(path) -> ModelSpec:
    """Read a JSON configuration file and validate it."""
    data = Path(path).read_bytes()
    try:
        raw = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    return validate(raw)
