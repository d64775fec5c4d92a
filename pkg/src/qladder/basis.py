"""Symmetry-resolved bases, the dimer transform and the symmetry operators Q, P^Q_q, C.

Dimer symbols per rung: H (both empty), D (both occupied),
T = (|u=1,d=0> + |u=0,d=1>)/sqrt2 and S = (|u=0,d=1> - |u=1,d=0>)/sqrt2.

The charge operator is

    Q = sum_k (T_k - S_k) * (-1)^(number of H or D on rungs left of k)

i.e. the phase base is fixed to -1. It is diagonal in the dimer basis and,
in the computational basis, acts on a singly occupied rung by swapping its
two configurations.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
import scipy.sparse as sp

from . import kernels
from .core import (
    DIMER_SYMBOLS,
    DIMER_WEIGHT,
    LadderSpec,
    SectorBasis,
    SectorError,
    SparseOperator,
    StateVector,
)

# ---------------------------------------------------------------------------
# enumeration
# ---------------------------------------------------------------------------


def enumerate_sector(spec, excitations):
    """Computational-basis sector with a fixed total excitation number."""
    excitations = int(excitations)
    if not 0 <= excitations <= spec.max_excitations:
        raise SectorError(f"excitations={excitations} outside [0, {spec.max_excitations}]")
    return _fock_sector(spec, excitations)


@lru_cache(maxsize=64)
def _fock_sector(spec, excitations):
    codes = kernels.enumerate_codes(spec.N, spec.local_dim, total=excitations)
    return SectorBasis(spec, codes, kind="fock", excitations=excitations)


@lru_cache(maxsize=16)
def enumerate_full(spec):
    """The whole ``local_dim**N`` computational space (no conservation law)."""
    return SectorBasis(spec, kernels.enumerate_codes(spec.N, spec.local_dim), kind="fock")


@lru_cache(maxsize=16)
def enumerate_parity_sector(spec, parity):
    """Computational states whose total excitation number has the given parity (0 or 1)."""
    codes = kernels.enumerate_codes(spec.N, spec.local_dim)
    c = codes.copy()
    s = np.zeros_like(c)
    for _ in range(spec.N):
        s += c % spec.local_dim
        c //= spec.local_dim
    return SectorBasis(spec, codes[s % 2 == parity], kind="fock", parity=int(parity))


def half_filling(spec):
    return enumerate_sector(spec, spec.M)


def _require_qubits(spec):
    if spec.local_dim != 2:
        raise SectorError("dimer machinery is defined only for local_dim = 2")


def charge_values(codes, M):
    """Q eigenvalue of each dimer code."""
    codes = np.asarray(codes, dtype=np.int64)
    q = np.zeros(codes.shape, dtype=np.int64)
    sign = np.ones(codes.shape, dtype=np.int64)
    rest = codes.copy()
    for _ in range(M):
        sym = rest % 4
        rest //= 4
        q += np.where(sym == 2, sign, 0) - np.where(sym == 3, sign, 0)
        sign = np.where(sym < 2, -sign, sign)
    return q


def enumerate_dimer_sector(spec, excitations, q=None):
    """Dimer-basis sector at fixed excitation number and optionally fixed Q."""
    _require_qubits(spec)
    excitations = int(excitations)
    if not 0 <= excitations <= spec.max_excitations:
        raise SectorError(f"excitations={excitations} outside [0, {spec.max_excitations}]")
    return _dimer_sector(spec, excitations, None if q is None else int(q))


@lru_cache(maxsize=64)
def _dimer_sector(spec, excitations, q):
    codes = kernels.enumerate_codes(spec.M, 4, DIMER_WEIGHT, excitations)
    if q is not None:
        codes = codes[charge_values(codes, spec.M) == q]
        if codes.size == 0:
            raise SectorError(f"no states with Q={q} at {excitations} excitations")
    return SectorBasis(spec, codes, kind="dimer", excitations=excitations, q=q)


def charge_sector_dims(spec, excitations=None):
    """``{q: dim}`` for every charge sector at the given filling (default half)."""
    _require_qubits(spec)
    exc = spec.M if excitations is None else excitations
    codes = kernels.enumerate_codes(spec.M, 4, DIMER_WEIGHT, exc)
    qs, counts = np.unique(charge_values(codes, spec.M), return_counts=True)
    return {int(a): int(b) for a, b in zip(qs, counts)}


def largest_charge_sector(spec, excitations=None):
    """Charge label of the largest sector; ties go to the non-negative label."""
    dims = charge_sector_dims(spec, excitations)
    return max(dims, key=lambda q: (dims[q], q))


def admissible_charges(spec, excitations=None):
    exc = spec.M if excitations is None else excitations
    m = min(exc, spec.N - exc)
    return list(range(-m, m + 1, 2))


# ---------------------------------------------------------------------------
# dimer strings
# ---------------------------------------------------------------------------


def dimer_code(string):
    """Code of a dimer string such as ``"TSDH"`` (rung 1 first)."""
    code = 0
    for k, ch in enumerate(string):
        try:
            code += DIMER_SYMBOLS.index(ch) * 4**k
        except ValueError:
            raise ValueError(f"invalid dimer symbol {ch!r} in {string!r}") from None
    return code


def dimer_string(code, M):
    out = []
    for _ in range(M):
        out.append(DIMER_SYMBOLS[code % 4])
        code //= 4
    return "".join(out)


def dimer_state(spec, string):
    """Normalized computational-basis state of a dimer product string."""
    if len(string) != spec.M:
        raise ValueError(f"dimer string must have length {spec.M}")
    exc = int(sum(DIMER_WEIGHT[DIMER_SYMBOLS.index(c)] for c in string))
    tr = dimer_transform(spec, exc)
    v = np.zeros(tr.dimer_basis.dim)
    v[tr.dimer_basis.index(dimer_code(string))] = 1.0
    return StateVector(tr.fock_basis, tr.matrix @ v)


# ---------------------------------------------------------------------------
# dimer transform
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DimerTransform:
    """Real orthogonal map ``W`` with ``psi_fock = W @ psi_dimer``.

    ``W`` is a tensor product of one 4x4 block per rung, restricted to a
    filling (and to a Q sector when ``dimer_basis.q`` is set, in which case
    it is an isometry rather than a square unitary).
    """

    fock_basis: SectorBasis
    dimer_basis: SectorBasis
    matrix: sp.csr_matrix

    def to_fock(self, state):
        amps = state.amplitudes if isinstance(state, StateVector) else np.asarray(state)
        return StateVector(self.fock_basis, self.matrix @ amps)

    def to_dimer(self, state):
        amps = state.amplitudes if isinstance(state, StateVector) else np.asarray(state)
        return StateVector(self.dimer_basis, self.matrix.T @ amps)


#: columns are H, D, T, S expressed on rung index u + 2d
RUNG_DIMER_MATRIX = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1 / np.sqrt(2), -1 / np.sqrt(2)],
        [0.0, 0.0, 1 / np.sqrt(2), 1 / np.sqrt(2)],
        [0.0, 1.0, 0.0, 0.0],
    ]
)


def dimer_transform(spec, excitations=None, q=None):
    """Map between the computational and dimer bases at fixed filling.

    ``excitations=None`` means half filling; pass ``"all"`` for the full space.
    """
    _require_qubits(spec)
    return _dimer_transform(spec, spec.M if excitations is None else excitations, q)


@lru_cache(maxsize=32)
def _dimer_transform(spec, excitations, q):
    if excitations == "all":
        fock = enumerate_full(spec)
        dim = SectorBasis(spec, np.arange(4**spec.M, dtype=np.int64), kind="dimer")
    else:
        fock = enumerate_sector(spec, excitations)
        dim = enumerate_dimer_sector(spec, excitations, q)
    col, fcode, amp = kernels.dimer_expand(dim.states, spec.M)
    row = fock.rank(fcode)
    W = sp.csr_matrix((amp, (row, col)), shape=(fock.dim, dim.dim))
    W.sum_duplicates()
    W.sort_indices()
    return DimerTransform(fock, dim, W)


def to_basis(state, basis):
    """Re-express ``state`` on ``basis`` (fock <-> dimer, or sub-sector embedding).

    Components outside the target basis are dropped, so moving onto a Q
    sector acts as the projector.
    """
    src = state.basis
    if src.same_space(basis):
        return state
    spec = src.spec
    if src.kind == "fock" and basis.kind == "fock":
        out = np.zeros(basis.dim, dtype=state.amplitudes.dtype)
        inside = basis.contains(src.states)
        out[basis.rank(src.states[inside])] = state.amplitudes[inside]
        return StateVector(basis, out)
    if src.kind == "dimer" and basis.kind == "dimer":
        out = np.zeros(basis.dim, dtype=state.amplitudes.dtype)
        inside = basis.contains(src.states)
        out[basis.rank(src.states[inside])] = state.amplitudes[inside]
        return StateVector(basis, out)
    if src.kind == "fock":
        exc = basis.excitations if basis.excitations is not None else "all"
        tr = dimer_transform(spec, exc, basis.q)
        return StateVector(basis, tr.to_dimer(to_basis(state, tr.fock_basis)).amplitudes)
    exc = src.excitations if src.excitations is not None else "all"
    tr = dimer_transform(spec, exc, src.q)
    return to_basis(tr.to_fock(state), basis)


# ---------------------------------------------------------------------------
# symmetry operators
# ---------------------------------------------------------------------------


def build_charge_operator(spec, basis=None):
    """Q as a sparse matrix in the computational basis (half filling by default).

    Built as ``W diag(q) W^T`` through the dimer transform.
    """
    _require_qubits(spec)
    if basis is None:
        basis = half_filling(spec)
    if basis.kind != "fock":
        raise SectorError("build_charge_operator expects a computational-basis sector")
    exc = basis.excitations if basis.excitations is not None else "all"
    tr = dimer_transform(spec, exc)
    if not tr.fock_basis.same_space(basis):
        raise SectorError("charge operator needs a full fixed-filling sector")
    qv = charge_values(tr.dimer_basis.states, spec.M).astype(float)
    W = tr.matrix
    Q = (W @ sp.diags(qv) @ W.T).tocsr()
    Q.data[np.abs(Q.data) < 1e-13] = 0.0
    Q.data = np.rint(Q.data)  # entries are exactly 0 or +-1 up to rounding
    return SparseOperator(basis, Q, label="Q")


@dataclass(frozen=True)
class ChargeProjection:
    state: StateVector
    admissible: bool


def project_charge(state, q):
    """Component of ``state`` in the Q = ``q`` sector (unnormalized).

    An inadmissible ``q`` gives the zero vector with ``admissible=False``.
    """
    basis = state.basis
    spec = basis.spec
    _require_qubits(spec)
    exc = basis.excitations
    if exc is None or basis.kind != "fock":
        raise SectorError("project_charge expects a state on a fixed-filling computational sector")
    if q not in admissible_charges(spec, exc):
        return ChargeProjection(StateVector(basis, np.zeros_like(state.amplitudes)), False)
    tr = dimer_transform(spec, exc)
    d = tr.matrix.T @ state.amplitudes
    mask = charge_values(tr.dimer_basis.states, spec.M) == q
    d = np.where(mask, d, 0.0)
    return ChargeProjection(StateVector(basis, tr.matrix @ d), True)


def build_chiral_operator(spec, basis=None):
    """C = P_{u<->d} prod_k u^x_k d^x_k d^z_k on the half-filling sector.

    Per rung, |u, d> -> s(d) |u' = 1-d, d' = 1-u> with s(1) = +1, s(0) = -1.
    In dimer language T <-> S, D -> H and H -> -D, so the overall phase is
    (-1) per doublon of the image (equivalently per holon of the input).
    """
    _require_qubits(spec)
    if basis is None:
        basis = half_filling(spec)
    codes = basis.states
    new = np.zeros_like(codes)
    phase = np.ones(codes.size)
    for k in range(spec.M):
        r = (codes >> (2 * k)) & 3
        u = r & 1
        d = r >> 1
        new += ((1 - d) + 2 * (1 - u)) << (2 * k)
        phase *= np.where(d == 1, 1.0, -1.0)
    rows = basis.rank(new)
    C = sp.csr_matrix((phase, (rows, np.arange(basis.dim))), shape=(basis.dim, basis.dim))
    return SparseOperator(basis, C, label="C")


# ---------------------------------------------------------------------------
# subsystems
# ---------------------------------------------------------------------------


def subsystem_partition(spec, kind, arg=None):
    """Sorted site indices of a subsystem.

    kind: ``"parallel"`` (top row), ``"perpendicular"`` (first ``arg`` rungs,
    default ``M // 2``), ``"rungs"`` (1-based rung list) or ``"qubits"``
    (0-based site list).
    """
    M = spec.M
    if kind == "parallel":
        return tuple(spec.up(k) for k in range(1, M + 1))
    if kind == "perpendicular":
        j = M // 2 if arg is None else int(arg)
        if not 0 < j <= M:
            raise ValueError(f"perpendicular cut must keep 1..{M} rungs, got {j}")
        return tuple(range(2 * j))
    if kind == "rungs":
        rungs = list(arg)
        if len(set(rungs)) != len(rungs):
            raise ValueError(f"duplicate rungs in {rungs}")
        if any(not 1 <= k <= M for k in rungs):
            raise ValueError(f"rung index out of range 1..{M}: {rungs}")
        return tuple(sorted(s for k in rungs for s in (spec.up(k), spec.down(k))))
    if kind == "qubits":
        sites = list(arg)
        if len(set(sites)) != len(sites):
            raise ValueError(f"duplicate sites in {sites}")
        if any(not 0 <= s < spec.N for s in sites):
            raise ValueError(f"site index out of range 0..{spec.N - 1}: {sites}")
        return tuple(sorted(sites))
    raise ValueError(f"unknown partition kind {kind!r}")


def complement(spec, subset):
    s = set(subset)
    return tuple(i for i in range(spec.N) if i not in s)


def sector_dim_formula(spec, excitations):
    """Closed-form dimension of a qubit sector, used as a cross-check."""
    return comb(spec.N, excitations)
