"""Exact auxiliary Fock space, transfer operators and physical state generation.

The auxiliary system lives in a fixed particle-number sector.  All generators
are quadratic and number conserving, so the sector is never left; the
interaction term additionally creates one physical boson at ``(x, t)``.

Physical modes are ordered time-major (``index = t * n_x + x``) and an
occupation pattern is stored at the C-order flat index of the tensor with
one axis of size ``phys_cutoff + 1`` per mode; the earliest mode is the most
significant digit.
"""

from __future__ import annotations

import itertools
import logging
import struct
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.sparse as sp

from . import onebody
from .exceptions import ConfigError, ResourceError
from .model import BoundaryVectors, ModelSpec, mode_offset

logger = logging.getLogger(__name__)

DEFAULT_BUDGET_BYTES = 512 * 2 ** 20
STATE_MAGIC = b"CPEPS1"
STATE_SCHEMA = 1


class AuxFockBasis:
    """Occupation basis of one particle-number sector.

    Parameters
    ----------
    n_x, d:
        Lattice sites and flavors; there are ``2 * d * n_x`` modes.
    n_aux:
        Conserved total particle number.
    statistics:
        ``"fermionic"`` (occupations 0/1, Jordan-Wigner signs along the
        canonical mode order) or ``"bosonic"``.
    cutoff:
        Bosonic per-mode occupation cap; ``None`` means no truncation.
    """

    def __init__(self, n_x, d, n_aux=1, statistics="fermionic", cutoff=None):
        if statistics not in ("fermionic", "bosonic"):
            raise ConfigError("statistics must be fermionic or bosonic")
        self.n_x, self.d, self.n_aux = n_x, d, n_aux
        self.statistics = statistics
        self.n_modes = 2 * d * n_x
        if statistics == "fermionic":
            cap = 1
        else:
            cap = n_aux if cutoff is None else min(cutoff, n_aux)
        self.cutoff = cap
        self.truncated = statistics == "bosonic" and cap < n_aux
        self.states = np.array(list(occupation_patterns(self.n_modes, n_aux, cap)), dtype=np.int64)
        if self.states.size == 0:
            self.states = np.zeros((0, self.n_modes), dtype=np.int64)
        self.index = {row.tobytes(): i for i, row in enumerate(self.states)}

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    def lookup(self, occ) -> int:
        return self.index.get(np.asarray(occ, dtype=np.int64).tobytes(), -1)

    def one_body(self, h, return_overflow=False):
        """Sparse many-body matrix of ``sum_pq h[p,q] c_p^dag c_q`` on the sector.

        For truncated bosonic bases the transitions that exceed the cutoff
        are collected in a second matrix (rows index the overflow states)
        when ``return_overflow`` is set.
        """
        h = np.asarray(h, dtype=complex)
        rows, cols, vals = [], [], []
        orows, ocols, ovals, overflow = [], [], [], {}
        occ = self.states
        fermi = self.statistics == "fermionic"
        for p, q in zip(*np.nonzero(h)):
            coef = h[p, q]
            has_q = occ[:, q] > 0
            if p == q:
                idx = np.nonzero(has_q)[0]
                rows.extend(idx)
                cols.extend(idx)
                vals.extend(coef * occ[idx, q])
                continue
            for i in np.nonzero(has_q)[0]:
                new = occ[i].copy()
                if fermi:
                    if new[p]:
                        continue
                    sign = (-1) ** int(new[:q].sum())
                    new[q] = 0
                    sign *= (-1) ** int(new[:p].sum())
                    amp = sign
                else:
                    amp = np.sqrt(new[q])
                    new[q] -= 1
                    amp *= np.sqrt(new[p] + 1)
                new[p] += 1
                k = self.index.get(new.tobytes(), -1)
                if k >= 0:
                    rows.append(k)
                    cols.append(i)
                    vals.append(coef * amp)
                else:
                    key = new.tobytes()
                    orows.append(overflow.setdefault(key, len(overflow)))
                    ocols.append(i)
                    ovals.append(coef * amp)
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim), dtype=complex)
        mat.sum_duplicates()
        if not return_overflow:
            return mat
        over = sp.csr_matrix((ovals, (orows, ocols)), shape=(len(overflow), self.dim),
                             dtype=complex)
        return mat, over

    def number_operator(self):
        return sp.diags(self.states.sum(axis=1).astype(complex), format="csr")

    def single_particle_state(self, mode: int) -> int:
        occ = np.zeros(self.n_modes, dtype=np.int64)
        occ[mode] = 1
        return self.lookup(occ)


def occupation_patterns(n_modes, total, cap):
    """Occupation tuples with the given total, lexicographically descending."""
    if n_modes == 0:
        if total == 0:
            yield ()
        return
    for k in range(min(cap, total), -1, -1):
        for rest in occupation_patterns(n_modes - 1, total - k, cap):
            yield (k,) + rest


def uniform_boundary(basis: AuxFockBasis) -> BoundaryVectors:
    """Uniform superposition of the sector states occupied by ``a`` particles only.

    For ``n_aux = 1`` this is the equal-weight sum of ``a^dag_{j,x}|0>`` over
    all sites and flavors.
    """
    d, n_x = basis.d, basis.n_x
    b_modes = [mode_offset(x, 1, j, d) for x in range(n_x) for j in range(d)]
    vec = np.ones(basis.dim, dtype=complex)
    if b_modes and basis.dim:
        vec[basis.states[:, b_modes].sum(axis=1) > 0] = 0
    nrm = np.linalg.norm(vec)
    if nrm == 0:
        raise ConfigError("the sector has no states with only a particles; give "
                          "explicit boundary vectors", "boundary")
    vec /= nrm
    return BoundaryVectors(vec, vec.copy(), basis.n_aux)


def basis_for(spec: ModelSpec) -> AuxFockBasis:
    st = spec.statistics
    return AuxFockBasis(spec.lattice.n_x, spec.d, spec.n_aux, st.aux, st.aux_cutoff)


def boundary_for(spec: ModelSpec, basis: Optional[AuxFockBasis] = None) -> BoundaryVectors:
    if spec.boundary is not None:
        return spec.boundary
    return uniform_boundary(basis or basis_for(spec))


# --------------------------------------------------------------------------
# Hamiltonian pieces
# --------------------------------------------------------------------------


def build_H_h(spec: ModelSpec, t: int, basis: Optional[AuxFockBasis] = None):
    """Nearest-neighbour hopping term at time index ``t`` as a sparse matrix."""
    basis = basis or basis_for(spec)
    j, _, _ = spec.couplings.at(t)
    return basis.one_body(onebody.hopping_matrix(spec.lattice, j))


def build_H_m(spec: ModelSpec, t: int, basis: Optional[AuxFockBasis] = None):
    """On-site potential ``sum_x m0^{jk}(x,t)(a^dag_j a_k - b^dag_j b_k)``."""
    basis = basis or basis_for(spec)
    _, m0, _ = spec.couplings.at(t)
    return basis.one_body(onebody.mass_matrix(spec.lattice.n_x, m0))


def build_H_int(spec: ModelSpec, t: int, basis: Optional[AuxFockBasis] = None) -> list:
    """Auxiliary factors ``G_x`` of ``sum_x G_x (x) psi^dag(x, t)``.

    ``G_x = R^{jk}(x,t)(a^dag_{j,x} a_{k,x} + b^dag_{j,x} b_{k,x})``.  Each
    application raises the occupation of physical mode ``(x, t)`` by one.
    """
    basis = basis or basis_for(spec)
    _, _, r = spec.couplings.at(t)
    n_x = spec.lattice.n_x
    return [basis.one_body(onebody.density_matrix(n_x, x, r[x])) for x in range(n_x)]


@dataclass
class TransferOp:
    """``M = 1 + eps (H_m + H_h + H_int)`` with the pieces kept separately.

    ``h_int[x]`` is the auxiliary factor multiplying ``psi^dag(x, t)``.
    """

    epsilon: float
    h_m: sp.csr_matrix
    h_h: sp.csr_matrix
    h_int: List[sp.csr_matrix]
    overflow: Optional[sp.csr_matrix] = None

    @property
    def aux_dim(self) -> int:
        return self.h_m.shape[0]

    @property
    def n_x(self) -> int:
        return len(self.h_int)

    def aux_generator(self):
        return self.h_m + self.h_h

    def aux_matrix(self):
        """``1 + eps (H_m + H_h)``: the part acting with the physical slice empty."""
        return sp.identity(self.aux_dim, dtype=complex, format="csr") + \
            self.epsilon * self.aux_generator()

    def to_dense(self, phys_cutoff: int = 1):
        """Dense operator on ``aux (x) slice`` (slice = ``n_x`` bosonic modes).

        Returns the matrix and the number of creation events dropped at the
        cutoff (truncation diagnostic).  Rows/columns are ``aux * slice_dim +
        slice_index``.
        """
        dim_s = (phys_cutoff + 1) ** self.n_x
        eye_s = sp.identity(dim_s, dtype=complex, format="csr")
        mat = sp.kron(self.aux_matrix(), eye_s, format="csr")
        dropped = 0
        for x, g in enumerate(self.h_int):
            create, lost = slice_creation(self.n_x, x, phys_cutoff)
            dropped += lost
            mat = mat + self.epsilon * sp.kron(g, create, format="csr")
        return mat.toarray(), dropped

    def apply(self, psi: np.ndarray, phys_cutoff: int = 1) -> np.ndarray:
        """Advance ``psi`` (shape ``(aux, prev)``) by one step with an empty fresh slice.

        Returns shape ``(aux, prev, slice_dim)``.
        """
        dim_s = (phys_cutoff + 1) ** self.n_x
        out = np.zeros(psi.shape + (dim_s,), dtype=complex)
        out[..., 0] = self.aux_matrix() @ psi
        for x, g in enumerate(self.h_int):
            if g.nnz:
                out[..., slice_index(self.n_x, x, phys_cutoff)] = self.epsilon * (g @ psi)
        return out


def slice_index(n_x: int, x: int, phys_cutoff: int) -> int:
    """Flat index of the slice pattern with one boson at ``x``."""
    return (phys_cutoff + 1) ** (n_x - 1 - x)


def slice_creation(n_x, x, phys_cutoff):
    """Sparse ``psi^dag`` on site ``x`` of a slice, truncated at the cutoff."""
    base = phys_cutoff + 1
    dim = base ** n_x
    stride = base ** (n_x - 1 - x)
    rows, cols, vals = [], [], []
    lost = 0
    for i in range(dim):
        n = (i // stride) % base
        if n == phys_cutoff:
            lost += 1
            continue
        rows.append(i + stride)
        cols.append(i)
        vals.append(np.sqrt(n + 1))
    return sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=complex), lost


def build_transfer(spec: ModelSpec, t: int, basis: Optional[AuxFockBasis] = None,
                   epsilon: Optional[float] = None) -> TransferOp:
    """Transfer operator for time index ``t``.

    ``epsilon`` overrides the lattice time step (``0`` gives the identity).
    """
    basis = basis or basis_for(spec)
    eps = spec.lattice.epsilon if epsilon is None else epsilon
    j, m0, r = spec.couplings.at(t)
    n_x = spec.lattice.n_x
    h_gen = onebody.hopping_matrix(spec.lattice, j) + onebody.mass_matrix(n_x, m0)
    overflow = None
    if basis.truncated:
        _, overflow = basis.one_body(h_gen, return_overflow=True)
    return TransferOp(
        epsilon=eps,
        h_m=basis.one_body(onebody.mass_matrix(n_x, m0)),
        h_h=basis.one_body(onebody.hopping_matrix(spec.lattice, j)),
        h_int=[basis.one_body(onebody.density_matrix(n_x, x, r[x])) for x in range(n_x)],
        overflow=overflow,
    )


def unitarity_defect(spec: ModelSpec, epsilon: float, t: int = 0,
                     basis: Optional[AuxFockBasis] = None) -> float:
    """Spectral norm of ``M^dag M - 1`` for the auxiliary part of the transfer operator.

    With ``J`` and ``m0`` anti-hermitian and ``R = 0`` the generator is
    anti-hermitian, so the defect is ``eps^2 ||H^dag H||``.
    """
    op = build_transfer(spec, t, basis, epsilon)
    m = op.aux_matrix().toarray()
    return float(np.linalg.norm(m.conj().T @ m - np.eye(m.shape[0]), 2))


def unitarity_slope(spec: ModelSpec, epsilons=(1e-1, 1e-2, 1e-3), t: int = 0):
    """Least-squares slope of ``log defect`` against ``log eps`` and the defects."""
    basis = basis_for(spec)
    eps = np.asarray(epsilons, dtype=float)
    defects = np.array([unitarity_defect(spec, e, t, basis) for e in eps])
    slope = np.polyfit(np.log(eps), np.log(defects), 1)[0]
    return float(slope), defects


# --------------------------------------------------------------------------
# state generation
# --------------------------------------------------------------------------


@dataclass
class PhysicalState:
    """Unnormalised physical lattice state with its bookkeeping.

    ``amplitudes`` is flat over ``(phys_cutoff + 1) ** (n_x * n_t)`` patterns.
    """

    amplitudes: np.ndarray
    n_x: int
    n_t: int
    phys_cutoff: int
    aux_dim: int
    n_aux: int
    aux_truncation_bound: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def normalized(self) -> np.ndarray:
        nrm = self.norm
        return self.amplitudes / nrm if nrm > 0 else self.amplitudes

    @property
    def local_dim(self) -> int:
        return self.phys_cutoff + 1

    @property
    def n_modes(self) -> int:
        return self.n_x * self.n_t

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((self.local_dim,) * self.n_modes)

    def mode(self, x: int, t: int) -> int:
        return t * self.n_x + x


def state_bytes(aux_dim, n_x, n_t, phys_cutoff):
    return 16 * 3 * max(aux_dim, 1) * (phys_cutoff + 1) ** (n_x * n_t)


def check_budget(aux_dim, n_x, n_t, phys_cutoff, budget_bytes=DEFAULT_BUDGET_BYTES):
    need = state_bytes(aux_dim, n_x, n_t, phys_cutoff)
    if need <= budget_bytes:
        return
    fit = max((k for k in range(n_t + 1)
               if state_bytes(aux_dim, n_x, k, phys_cutoff) <= budget_bytes), default=0)
    raise ResourceError(
        f"state generation needs ~{need / 2 ** 20:.1f} MiB, budget is "
        f"{budget_bytes / 2 ** 20:.1f} MiB",
        required_bytes=need, budget_bytes=budget_bytes,
        suggestion=f"largest admissible lattice at n_x={n_x}: n_t={fit}")


def generate_state(spec: ModelSpec, boundary: Optional[BoundaryVectors] = None,
                   transfers: Optional[list] = None,
                   budget_bytes: int = DEFAULT_BUDGET_BYTES) -> PhysicalState:
    """Contract ``<omega_L| M(t_{n_t-1}) ... M(t_0) |omega_R> |Omega>``.

    ``transfers`` may supply a custom schedule of :class:`TransferOp`.
    """
    basis = basis_for(spec)
    boundary = boundary or boundary_for(spec, basis)
    if boundary.omega_r.shape[0] != basis.dim:
        raise ConfigError(f"boundary vectors need {basis.dim} components", "boundary")
    lat, cut = spec.lattice, spec.statistics.phys_cutoff
    check_budget(basis.dim, lat.n_x, lat.n_t, cut, budget_bytes)
    if transfers is None:
        transfers = [build_transfer(spec, t, basis) for t in range(lat.n_t)]
    psi = boundary.omega_r.reshape(-1, 1).astype(complex)
    leak = 0.0
    for op in transfers:
        if op.overflow is not None and op.overflow.shape[0]:
            leak += op.epsilon * float(np.linalg.norm(op.overflow @ psi))
        psi = op.apply(psi, cut).reshape(psi.shape[0], -1)
    amps = boundary.omega_l.conj() @ psi
    return PhysicalState(amplitudes=np.asarray(amps).ravel(), n_x=lat.n_x, n_t=lat.n_t,
                         phys_cutoff=cut, aux_dim=basis.dim, n_aux=basis.n_aux,
                         aux_truncation_bound=leak)


# --------------------------------------------------------------------------
# binary state files
# --------------------------------------------------------------------------

_HEADER = struct.Struct("<6sIIIIIIQ")


def write_state(path, state: PhysicalState):
    """Little-endian state file: header then complex64 amplitudes (unnormalised)."""
    from .io import atomic_write_bytes

    header = _HEADER.pack(STATE_MAGIC, STATE_SCHEMA, state.n_x, state.n_t,
                          state.phys_cutoff, state.n_aux, state.aux_dim,
                          state.amplitudes.size)
    body = np.ascontiguousarray(state.amplitudes, dtype="<c8").tobytes()
    atomic_write_bytes(path, header + body)


def read_state(path) -> PhysicalState:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ConfigError("state file truncated", str(path))
    magic, schema, n_x, n_t, cut, n_aux, aux_dim, count = _HEADER.unpack_from(raw)
    if magic != STATE_MAGIC or schema != STATE_SCHEMA:
        raise ConfigError("not a CPEPS1 state file", str(path))
    amps = np.frombuffer(raw, dtype="<c8", offset=_HEADER.size)
    if amps.size != count or count != (cut + 1) ** (n_x * n_t):
        raise ConfigError("amplitude count does not match header", str(path))
    return PhysicalState(amplitudes=amps.astype(complex), n_x=n_x, n_t=n_t,
                         phys_cutoff=cut, aux_dim=aux_dim, n_aux=n_aux)


def all_patterns(n_modes: int, cutoff: int):
    """Occupation patterns in flat-index order (helper for tests and CLI)."""
    return itertools.product(range(cutoff + 1), repeat=n_modes)
