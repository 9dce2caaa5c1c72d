"""Exact Grassmann algebra, Berezin integration and coherent-state path integrals.

Elements are sparse maps from monomials to coefficients.  A monomial is an
int bitmask over generator indices and is stored in ascending generator
order, so ``theta_1 theta_0`` is kept as ``-theta_0 theta_1``.  Coefficients
are complex scalars or 1-D arrays; multiplying two array coefficients takes
the flattened outer product with the left factor as the more significant
index.  This is how physical-occupation payloads are carried through a
contraction.

Coherent-state conventions (fermionic, ``n`` modes in canonical order):

* ket components ``c_S(phi) = phi_{i1} phi_{i2} ... phi_{ik}`` for
  ``S = {i1 < ... < ik}``, bra components
  ``cbar_S(phibar) = phibar_{ik} ... phibar_{i1}``;
* ``<phi|O|phi'> = sum_ST cbar_S(phibar) O_ST c_T(phi')`` which gives
  ``<phi|phi'> = exp(phibar . phi')`` and
  ``<phi|c_p^dag c_q|phi'> = phibar_p phi'_q exp(phibar . phi')``;
* resolution of identity ``int prod_i dphibar_i dphi_i exp(-phibar . phi)
  c_T(phi) cbar_S(phibar) = delta_ST`` with ``phi_i`` integrated first.
"""

from __future__ import annotations

import math
from itertools import combinations
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .exceptions import ConfigError, ConsistencyError, ResourceError

MAX_GENERATOR_PAIRS = 16


def _popcount(x: int) -> int:
    return bin(x).count("1")


def _reorder_sign(a: int, b: int) -> int:
    """Sign of sorting the concatenation ``A B`` of two sorted monomials."""
    swaps = 0
    while b:
        low = b & -b
        j = low.bit_length() - 1
        swaps += _popcount(a >> (j + 1))
        b ^= low
    return -1 if swaps & 1 else 1


def _combine(a, b):
    if isinstance(a, np.ndarray) and isinstance(b, np.ndarray) and a.ndim and b.ndim:
        return np.multiply.outer(a, b).ravel()
    return a * b


def _is_zero(c, tol=0.0):
    if isinstance(c, np.ndarray):
        return not np.any(np.abs(c) > tol)
    return abs(c) <= tol


class GrassmannElement:
    """Element of a finite Grassmann algebra.

    Parameters
    ----------
    terms:
        Mapping ``mask -> coefficient``.
    n_generators:
        Optional size of the algebra, used to reject unknown generators.
    """

    __slots__ = ("terms", "n_generators")

    def __init__(self, terms=None, n_generators=None):
        self.terms: Dict[int, object] = dict(terms or {})
        self.n_generators = n_generators

    # construction ------------------------------------------------------
    @classmethod
    def scalar(cls, c, n_generators=None):
        return cls({0: c}, n_generators)

    @classmethod
    def generator(cls, i: int, n_generators=None, coef=1.0):
        if n_generators is not None and not 0 <= i < n_generators:
            raise ConfigError(f"unknown generator {i}")
        return cls({1 << i: coef}, n_generators)

    @classmethod
    def monomial(cls, indices: Sequence[int], coef=1.0, n_generators=None):
        """Product ``theta_{i0} theta_{i1} ...`` in the given (arbitrary) order."""
        out = cls.scalar(coef, n_generators)
        for i in indices:
            out = out * cls.generator(i, n_generators)
        return out

    # algebra -----------------------------------------------------------
    def _n(self, other):
        if isinstance(other, GrassmannElement):
            return self.n_generators or other.n_generators
        return self.n_generators

    def __add__(self, other):
        if not isinstance(other, GrassmannElement):
            other = GrassmannElement.scalar(other)
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out[k] + v if k in out else v
        return GrassmannElement(out, self._n(other))

    __radd__ = __add__

    def __neg__(self):
        return GrassmannElement({k: -v for k, v in self.terms.items()}, self.n_generators)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, GrassmannElement):
            return GrassmannElement({k: v * other for k, v in self.terms.items()},
                                    self.n_generators)
        out: Dict[int, object] = {}
        for a, ca in self.terms.items():
            for b, cb in other.terms.items():
                if a & b:
                    continue
                val = _combine(ca, cb)
                if _reorder_sign(a, b) < 0:
                    val = -val
                key = a | b
                out[key] = out[key] + val if key in out else val
        return GrassmannElement(out, self._n(other))

    def __rmul__(self, other):
        # scalars commute with everything
        return self * other

    def __truediv__(self, c):
        return self * (1.0 / c)

    # structure ---------------------------------------------------------
    @property
    def body(self):
        """Coefficient of the empty monomial."""
        return self.terms.get(0, 0.0)

    def is_even(self) -> bool:
        return all(_popcount(k) % 2 == 0 for k in self.terms)

    def is_odd(self) -> bool:
        return all(_popcount(k) % 2 == 1 for k in self.terms)

    def degree(self) -> int:
        return max((_popcount(k) for k in self.terms), default=0)

    def coefficient(self, indices: Sequence[int]):
        """Coefficient of the product ``theta_{i0} theta_{i1} ...`` as written."""
        mask, sign = 0, 1
        for i in indices:
            bit = 1 << i
            if mask & bit:
                return 0.0
            sign *= _reorder_sign(mask, bit)
            mask |= bit
        return sign * self.terms.get(mask, 0.0)

    def prune(self, tol=0.0):
        return GrassmannElement({k: v for k, v in self.terms.items() if not _is_zero(v, tol)},
                                self.n_generators)

    def exp(self):
        """``exp`` of an element whose soul (non-scalar part) is even and nilpotent."""
        soul = GrassmannElement({k: v for k, v in self.terms.items() if k}, self.n_generators)
        if not soul.is_even():
            raise ConfigError("exp needs an even element")
        out = GrassmannElement.scalar(1.0, self.n_generators)
        power = GrassmannElement.scalar(1.0, self.n_generators)
        k = 0
        while True:
            k += 1
            power = (power * soul).prune()
            if not power.terms:
                break
            out = out + power / math.factorial(k)
        body = self.body
        return out * (np.exp(body) if not _is_zero(body) else 1.0)

    def integrate(self, generators: Sequence[int]):
        """Berezin integral ``int dtheta_{g0} dtheta_{g1} ... (self)``.

        The innermost (last listed) generator is integrated first.  Each step
        anticommutes ``theta_g`` to the front of the monomial and removes it.
        """
        out = self
        for g in reversed(list(generators)):
            if self.n_generators is not None and not 0 <= g < self.n_generators:
                raise ConfigError(f"unknown generator {g}")
            bit, below = 1 << g, (1 << g) - 1
            terms = {}
            for k, v in out.terms.items():
                if k & bit:
                    terms[k ^ bit] = -v if _popcount(k & below) & 1 else v
            out = GrassmannElement(terms, self.n_generators)
        return out

    def allclose(self, other, atol=1e-12) -> bool:
        diff = (self - other).prune(atol)
        return not diff.terms

    def __repr__(self):
        parts = [f"{v}*{bin(k)}" for k, v in sorted(self.terms.items())]
        return "GrassmannElement(" + " + ".join(parts or ["0"]) + ")"


# --------------------------------------------------------------------------
# Gaussian integrals
# --------------------------------------------------------------------------


def bilinear(bar_gens, gens, matrix, n_generators=None) -> GrassmannElement:
    """``sum_ij matrix[i, j] theta_bar_i theta_j``."""
    matrix = np.asarray(matrix)
    out = GrassmannElement({}, n_generators)
    for i, j in zip(*np.nonzero(matrix)):
        out = out + GrassmannElement.monomial([bar_gens[i], gens[j]], matrix[i, j],
                                              n_generators)
    return out


def pair_integrate(element: GrassmannElement, bar_gens, gens) -> GrassmannElement:
    """Integrate with the pair measure ``prod_i dthetabar_i dtheta_i``."""
    order: List[int] = []
    for gb, g in zip(bar_gens, gens):
        order += [gb, g]
    return element.integrate(order)


def gaussian_integral(matrix) -> complex:
    """``int prod dthetabar dtheta exp(-thetabar A theta)`` by monomial expansion.

    Equals ``det A`` for every square ``A``.
    """
    a = np.asarray(matrix, dtype=complex)
    n = a.shape[0]
    bar, gen = list(range(0, 2 * n, 2)), list(range(1, 2 * n, 2))
    weight = (-bilinear(bar, gen, a, 2 * n)).exp()
    return complex(pair_integrate(weight, bar, gen).body)


def gaussian_moment(a: int, b: int) -> float:
    """Bosonic moment ``int d^2 phi / pi  exp(-|phi|^2) phi^a phibar^b = a! delta_ab``."""
    return float(math.factorial(a)) if a == b else 0.0


def slice_measure_constant(d: int, n_x: int, literal: bool = False) -> float:
    """Normalisation of the bosonic resolution of identity on one time slice.

    A slice carries ``4 D n_x`` complex integration variables (two flavor
    sectors, two species).  Each contributes ``pi``; ``literal=True`` returns
    ``pi ** (8 D n_x)`` instead.
    """
    m = 4 * d * n_x
    return float(np.pi ** (2 * m if literal else m))


# --------------------------------------------------------------------------
# coherent states
# --------------------------------------------------------------------------


@dataclass
class CoherentLabel:
    """Coherent-state label on one time slice.

    ``phi[i]`` and ``phibar[i]`` are Grassmann elements (fermions) or complex
    numbers (bosons, ``phibar = conj(phi)``).
    """

    phi: list
    phibar: list
    slice: int = 0

    @property
    def n_modes(self) -> int:
        return len(self.phi)

    @classmethod
    def grassmann(cls, bar_gens, gens, n_generators=None, slice=0):
        return cls([GrassmannElement.generator(g, n_generators) for g in gens],
                   [GrassmannElement.generator(g, n_generators) for g in bar_gens], slice)

    @classmethod
    def bosonic(cls, values, slice=0):
        values = [complex(v) for v in values]
        return cls(values, [v.conjugate() for v in values], slice)


def _dot(left, right):
    out = 0
    for a, b in zip(left, right):
        out = out + a * b
    return out


def overlap(out: CoherentLabel, inp: CoherentLabel, normalized: bool = True):
    """``<phi_out|phi_in>``; ``normalized`` includes the ``-|phi|^2/2`` factors."""
    if out.n_modes != inp.n_modes:
        raise ConfigError("coherent labels cover different mode sets")
    x = _dot(out.phibar, inp.phi)
    if normalized:
        x = x - 0.5 * _dot(out.phibar, out.phi) - 0.5 * _dot(inp.phibar, inp.phi)
    return x.exp() if isinstance(x, GrassmannElement) else np.exp(x)


def overlap_derivative_form(phi_t, phi_dot, epsilon):
    """Bosonic ``exp[-(eps/2) sum(phibar phidot - phidotbar phi)]`` for comparison."""
    phi_t, phi_dot = np.asarray(phi_t), np.asarray(phi_dot)
    x = -(epsilon / 2) * np.sum(phi_t.conj() * phi_dot - phi_dot.conj() * phi_t)
    return np.exp(x)


def ket_components(gens, states, n_generators=None):
    """``c_S(phi)`` for each occupation row of ``states`` (fermionic)."""
    return [GrassmannElement.monomial([gens[i] for i in np.nonzero(row)[0]],
                                      1.0, n_generators) for row in states]


def bra_components(bar_gens, states, n_generators=None):
    """``cbar_S(phibar)`` for each occupation row of ``states`` (fermionic)."""
    return [GrassmannElement.monomial([bar_gens[i] for i in np.nonzero(row)[0][::-1]],
                                      1.0, n_generators) for row in states]


def full_fock_states(n_modes):
    """All occupation patterns of ``n_modes`` fermionic modes, grouped by particle number."""
    rows = []
    for k in range(n_modes + 1):
        rows.extend(_sector_rows(n_modes, k))
    return np.array(rows, dtype=np.int64).reshape(-1, n_modes)


def _sector_rows(n_modes, k):
    out = []
    for occ in combinations(range(n_modes), k):
        row = [0] * n_modes
        for i in occ:
            row[i] = 1
        out.append(row)
    out.sort(reverse=True)
    return out


def resolution_matrix(n_modes: int) -> np.ndarray:
    """``int dmu exp(-phibar phi) c_T(phi) cbar_S(phibar)`` for all ``S, T``.

    Equals the identity on the full ``2 ** n_modes`` dimensional Fock space.
    """
    ng = 2 * n_modes
    bar, gen = list(range(0, ng, 2)), list(range(1, ng, 2))
    states = full_fock_states(n_modes)
    kets = ket_components(gen, states, ng)
    bras = bra_components(bar, states, ng)
    weight = (-bilinear(bar, gen, np.eye(n_modes), ng)).exp()
    dim = len(states)
    out = np.zeros((dim, dim), dtype=complex)
    for t, ck in enumerate(kets):
        left = weight * ck
        for s, cb in enumerate(bras):
            out[t, s] = pair_integrate(left * cb, bar, gen).body
    return out


def operator_matrix_element(bar_out, gens_in, states, matrix, n_generators=None):
    """``sum_ST cbar_S(phibar_out) O_ST c_T(phi_in)`` for a matrix on ``states``.

    ``matrix`` may carry a trailing payload axis; coefficients then become
    payload arrays.
    """
    bras = bra_components(bar_out, states, n_generators)
    kets = ket_components(gens_in, states, n_generators)
    matrix = np.asarray(matrix)
    out = GrassmannElement({}, n_generators)
    for s, t in zip(*np.nonzero(np.abs(matrix).reshape(len(states), len(states), -1)
                                .sum(axis=-1))):
        out = out + (bras[s] * kets[t]) * (matrix[s, t].copy() if matrix.ndim == 3
                                           else matrix[s, t])
    return out


# --------------------------------------------------------------------------
# step amplitudes
# --------------------------------------------------------------------------


@dataclass
class ChainStep:
    """One factor ``1 + sum_pq T_pq c_p^dag c_q + sum_x G_x (x) e_x`` of a transfer chain.

    ``payload`` lists ``(slice_index, G)`` pairs; ``slice_dim`` is the size of
    the physical-pattern axis the step contributes.
    """

    t: np.ndarray
    payload: list
    slice_dim: int

    def payload_vector(self, index, value=1.0):
        v = np.zeros(self.slice_dim, dtype=complex)
        v[index] = value
        return v


def step_symbol(step: ChainStep, bar_out, gens_in, n_generators=None,
                exponentiated=False, scale=1.0) -> GrassmannElement:
    """Coherent matrix element ``<phi_out| step |phi_in>`` (unnormalised states).

    The exact normal-ordered symbol is
    ``exp(phibar.phi) [(1 + phibar T phi) e_0 + sum_x (phibar G_x phi) e_x]``.
    ``exponentiated=True`` returns the action form
    ``exp(phibar.phi + phibar T phi) e_0 + exp(phibar.phi) sum_x (phibar G_x phi) e_x``,
    which agrees to second order in the step generator.  ``scale`` multiplies
    every bilinear of the action form (used to compare exponent sign
    conventions).
    """
    n = len(gens_in)
    overlap_el = bilinear(bar_out, gens_in, scale * np.eye(n), n_generators)
    kinetic = bilinear(bar_out, gens_in, scale * np.asarray(step.t), n_generators)
    e0 = step.payload_vector(0)
    if exponentiated:
        out = (overlap_el + kinetic).exp() * e0
    else:
        out = overlap_el.exp() * ((kinetic + 1.0) * e0)
    base = overlap_el.exp()
    for idx, g in step.payload:
        out = out + base * (bilinear(bar_out, gens_in, scale * np.asarray(g), n_generators)
                            * step.payload_vector(idx))
    return out


def _as_payload(element: GrassmannElement, dim: int) -> GrassmannElement:
    terms = {}
    for k, v in element.terms.items():
        if not isinstance(v, np.ndarray):
            arr = np.zeros(dim, dtype=complex)
            arr[0] = v
            v = arr
        terms[k] = v
    return GrassmannElement(terms, element.n_generators)


def contract_chain(n_modes: int, steps: Sequence[ChainStep], states, omega_l, omega_r,
                   exponentiated=False, scale=1.0,
                   max_pairs=MAX_GENERATOR_PAIRS) -> np.ndarray:
    """Exact fermionic path integral ``<omega_L| step_{N-1} ... step_0 |omega_R>``.

    One coherent resolution is inserted per slice boundary (``N + 1`` in
    total) and all Grassmann variables are Berezin-integrated, slice by
    slice from the right.  ``states`` lists the occupation rows that index the
    boundary vectors.  Returns the payload amplitudes, earliest step most
    significant.  ``scale`` multiplies every bilinear in the weight,
    including the measure factor ``exp(-phibar phi)``.
    """
    n_slices = len(steps) + 1
    if n_modes * n_slices > max_pairs:
        raise ResourceError(
            f"{n_modes * n_slices} generator pairs exceed the limit of {max_pairs}",
            suggestion="reduce n_x, n_t or D")
    ng = 2 * n_modes * n_slices

    def bar(s):
        return [2 * n_modes * s + 2 * i for i in range(n_modes)]

    def gen(s):
        return [2 * n_modes * s + 2 * i + 1 for i in range(n_modes)]

    states = np.asarray(states)
    z = GrassmannElement({}, ng)
    for c, cb in zip(np.asarray(omega_r), bra_components(bar(0), states, ng)):
        if c != 0:
            z = z + cb * complex(c)
    z = _as_payload(z, 1)
    for s, step in enumerate(steps):
        weight = (-bilinear(bar(s), gen(s), scale * np.eye(n_modes), ng)).exp()
        symbol = _as_payload(step_symbol(step, bar(s + 1), gen(s), ng, exponentiated, scale),
                             step.slice_dim)
        # the symbol is even, so it commutes with z; keep z on the left so the
        # older payload stays the more significant index
        z = pair_integrate((z * weight) * symbol, bar(s), gen(s)).prune()
    left = GrassmannElement({}, ng)
    for c, ck in zip(np.asarray(omega_l), ket_components(gen(n_slices - 1), states, ng)):
        if c != 0:
            left = left + ck * complex(np.conj(c))
    weight = (-bilinear(bar(n_slices - 1), gen(n_slices - 1), scale * np.eye(n_modes),
                        ng)).exp()
    total = pair_integrate(left * weight * z, bar(n_slices - 1), gen(n_slices - 1))
    body = total.body
    if isinstance(body, np.ndarray):
        return body.astype(complex)
    size = int(np.prod([st.slice_dim for st in steps])) if steps else 1
    return np.zeros(size, dtype=complex)


# --------------------------------------------------------------------------
# lattice model interface
# --------------------------------------------------------------------------


def model_steps(spec, epsilon: Optional[float] = None) -> List[ChainStep]:
    """Chain steps equivalent to the transfer operators of a lattice model."""
    from . import onebody
    from .fock import slice_index

    lat = spec.lattice
    eps = lat.epsilon if epsilon is None else epsilon
    cut = spec.statistics.phys_cutoff
    steps = []
    for t in range(lat.n_t):
        j, m0, r = spec.couplings.at(t)
        h = onebody.hopping_matrix(lat, j) + onebody.mass_matrix(lat.n_x, m0)
        payload = [(slice_index(lat.n_x, x, cut), eps * onebody.density_matrix(lat.n_x, x, r[x]))
                   for x in range(lat.n_x)]
        steps.append(ChainStep(eps * h, payload, (cut + 1) ** lat.n_x))
    return steps


def contract_path_integral(spec, boundary=None, max_pairs=MAX_GENERATOR_PAIRS) -> np.ndarray:
    """Physical state amplitudes of a fermionic lattice model from the path integral.

    Matches :func:`cpeps.fock.generate_state` amplitude by amplitude.
    """
    from .fock import basis_for, boundary_for

    if spec.statistics.aux != "fermionic":
        raise ConfigError("the Grassmann contraction needs fermionic auxiliary statistics",
                          "statistics.aux")
    basis = basis_for(spec)
    boundary = boundary or boundary_for(spec, basis)
    return contract_chain(spec.n_aux_modes, model_steps(spec), basis.states,
                          boundary.omega_l, boundary.omega_r, max_pairs=max_pairs)


@dataclass
class StepAmplitude:
    """Single-step coherent amplitude from the operator route and the closed form."""

    operator: GrassmannElement
    closed_form: GrassmannElement
    exponentiated: GrassmannElement

    def deviation(self, which="closed_form") -> float:
        other = getattr(self, which)
        diff = (self.operator - other).prune()
        return max((float(np.max(np.abs(v))) for v in diff.terms.values()), default=0.0)


def step_amplitude(spec, t: int = 0, epsilon: Optional[float] = None,
                   check_tol: Optional[float] = None) -> StepAmplitude:
    """``<phi_out| M(t) |phi_in>`` with Grassmann labels, computed two ways.

    The operator route sums the many-body matrix elements of the Fock-space
    transfer operator over the full Fock space; the closed form is the
    normal-ordered symbol.  With ``check_tol`` set, a disagreement raises
    :class:`ConsistencyError`.
    """
    from .fock import AuxFockBasis, build_transfer, slice_index

    n = spec.n_aux_modes
    if n > 8:
        raise ResourceError("single-step amplitude limited to 8 auxiliary modes")
    ng = 2 * n
    bar_out, gens_in = list(range(0, ng, 2)), list(range(1, ng, 2))
    lat, cut = spec.lattice, spec.statistics.phys_cutoff
    eps = lat.epsilon if epsilon is None else epsilon
    slice_dim = (cut + 1) ** lat.n_x
    operator = GrassmannElement({}, ng)
    for k in range(n + 1):
        basis = AuxFockBasis(lat.n_x, spec.d, k, "fermionic")
        op = build_transfer(spec, t, basis, epsilon=eps)
        mat = np.zeros((basis.dim, basis.dim, slice_dim), dtype=complex)
        mat[..., 0] = op.aux_matrix().toarray()
        for x, g in enumerate(op.h_int):
            mat[..., slice_index(lat.n_x, x, cut)] += eps * g.toarray()
        operator = operator + operator_matrix_element(bar_out, gens_in, basis.states, mat, ng)
    step = model_steps(spec, eps)[t] if lat.n_t else ChainStep(np.zeros((n, n)), [], slice_dim)
    closed = _as_payload(step_symbol(step, bar_out, gens_in, ng), slice_dim)
    expo = _as_payload(step_symbol(step, bar_out, gens_in, ng, exponentiated=True), slice_dim)
    result = StepAmplitude(_as_payload(operator, slice_dim), closed, expo)
    if check_tol is not None and result.deviation() > check_tol:
        raise ConsistencyError(f"step amplitude routes disagree by {result.deviation():.3e}")
    return result


# --------------------------------------------------------------------------
# field rescaling
# --------------------------------------------------------------------------


def rescale_fields(cfg, epsilon_x: float):
    """Map lattice integration variables to continuum fields, ``Psi -> Psi / sqrt(eps_x)``."""
    return cfg.scaled(1.0 / np.sqrt(epsilon_x))


def lattice_variables(cfg, epsilon_x: float):
    """Inverse of :func:`rescale_fields`."""
    return cfg.scaled(np.sqrt(epsilon_x))


def discrete_action(cfg, j=1.0, m0=0.0):
    """Lattice action of a sampled auxiliary spinor field (single flavor sector).

    ``sum_{x,t} eps [ -1/2 (Psi^dag dPsi/dt - dPsi^dag/dt Psi)
    + Psi^dag (J sigma_x i dPsi/dx + m0 sigma_z Psi) ]`` with periodic central
    differences.  The sum over ``x`` carries no ``eps_x``: with continuum
    samples plugged in unscaled it grows like ``1 / eps_x``.
    """
    from .fields import central_derivative, SIGMA_X, SIGMA_Z

    psi = cfg.values
    dt = central_derivative(psi, cfg.dt, axis=-3)
    dx = central_derivative(psi, cfg.dx, axis=-2)
    kin_t = -0.5 * (np.einsum("...s,...s->...", psi.conj(), dt)
                    - np.einsum("...s,...s->...", dt.conj(), psi))
    hop = np.einsum("...s,st,...t->...", psi.conj(), 1j * complex(j) * SIGMA_X, dx)
    mass = np.einsum("...s,st,...t->...", psi.conj(), complex(m0) * SIGMA_Z, psi)
    return complex(cfg.dt * np.sum(kin_t + hop + mass))
