"""Shared containers: ladder geometry, sector bases, state vectors, sparse operators."""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import kernels

#: dimer symbols in digit order
DIMER_SYMBOLS = "HDTS"
DIMER_WEIGHT = np.array([0, 2, 1, 1], dtype=np.int64)  # excitations carried by H, D, T, S


class SectorError(ValueError):
    pass


@dataclass(frozen=True)
class LadderSpec:
    """Ladder with ``M`` rungs (``N = 2M`` sites).

    Site ordering is interleaved: ``u_k`` is site ``2(k-1)`` and ``d_k`` is
    site ``2(k-1)+1`` (k is 1-based), so rung ``k`` owns two adjacent digits.
    """

    M: int
    local_dim: int = 2

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M!r}")
        if self.local_dim not in (2, 3):
            raise ValueError(f"local_dim must be 2 or 3, got {self.local_dim!r}")

    @property
    def N(self):
        return 2 * self.M

    @staticmethod
    def up(k):
        """Site index of the top-row qubit on rung ``k`` (1-based)."""
        return 2 * (k - 1)

    @staticmethod
    def down(k):
        return 2 * (k - 1) + 1

    @property
    def max_excitations(self):
        return (self.local_dim - 1) * self.N


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Sorted list of configuration codes spanning one symmetry sector.

    ``kind == "fock"``: codes pack ``2M`` base-``local_dim`` digits, one per site.
    ``kind == "dimer"``: codes pack ``M`` base-4 digits (H, D, T, S), one per rung.
    ``excitations is None`` means no number constraint (full space, or a parity
    sector when ``parity`` is set). ``q`` is the charge label of a dimer sector.
    """

    spec: LadderSpec
    states: np.ndarray
    kind: str = "fock"
    excitations: int | None = None
    q: int | None = None
    parity: int | None = None

    def __post_init__(self):
        s = np.ascontiguousarray(self.states, dtype=np.int64)
        s.setflags(write=False)
        object.__setattr__(self, "states", s)
        if s.size > 1 and not np.all(np.diff(s) > 0):
            raise SectorError("basis codes must be strictly ascending")

    @property
    def dim(self):
        return int(self.states.size)

    def __len__(self):
        return self.dim

    @property
    def base(self):
        return 4 if self.kind == "dimer" else self.spec.local_dim

    @property
    def n_digits(self):
        return self.spec.M if self.kind == "dimer" else self.spec.N

    def rank(self, codes):
        """Dense indices of ``codes``; raises if any code is absent."""
        codes = np.asarray(codes, dtype=np.int64)
        idx = np.searchsorted(self.states, codes)
        bad = (idx >= self.dim) | (self.states[np.minimum(idx, self.dim - 1)] != codes)
        if np.any(bad):
            raise SectorError(f"codes not in basis: {np.atleast_1d(codes)[np.atleast_1d(bad)][:5]}")
        return idx

    def index(self, code):
        return int(self.rank(np.int64(code)))

    def contains(self, codes):
        codes = np.asarray(codes, dtype=np.int64)
        idx = np.minimum(np.searchsorted(self.states, codes), self.dim - 1)
        return self.states[idx] == codes

    def digits(self, codes=None):
        """Digit table of shape (n_codes, n_digits); column j is digit j."""
        c = self.states if codes is None else np.asarray(codes, dtype=np.int64)
        b = self.base
        out = np.empty((c.size, self.n_digits), dtype=np.int64)
        rest = c.copy()
        for j in range(self.n_digits):
            out[:, j] = rest % b
            rest //= b
        return out

    def same_space(self, other):
        return (
            self is other
            or (
                self.spec == other.spec
                and self.kind == other.kind
                and self.dim == other.dim
                and np.array_equal(self.states, other.states)
            )
        )

    def describe(self):
        d = {"kind": self.kind, "M": self.spec.M, "local_dim": self.spec.local_dim, "dim": self.dim}
        if self.excitations is not None:
            d["excitations"] = self.excitations
        if self.q is not None:
            d["q"] = self.q
        if self.parity is not None:
            d["parity"] = self.parity
        return d


@dataclass(frozen=True, eq=False)
class StateVector:
    basis: SectorBasis
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes)
        if a.ndim != 1 or a.size != self.basis.dim:
            raise SectorError(f"amplitude vector of length {a.size} does not match basis dim {self.basis.dim}")
        object.__setattr__(self, "amplitudes", a)

    @property
    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self):
        n = self.norm
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.basis, self.amplitudes / n)

    def vdot(self, other):
        if not self.basis.same_space(other.basis):
            raise SectorError("states live in different bases")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def with_phase_convention(self):
        """Rotate the global phase so the first nonzero amplitude is real positive."""
        a = self.amplitudes
        nz = np.flatnonzero(np.abs(a) > 1e-14 * max(np.abs(a).max(initial=0.0), 1e-300))
        if nz.size == 0:
            return self
        lead = a[nz[0]]
        out = a * np.sign(lead) if np.isrealobj(a) else a * (abs(lead) / lead)
        return StateVector(self.basis, out)

    def to_full(self):
        """Dense vector over the whole ``local_dim**N`` (or ``4**M``) space."""
        full = np.zeros(self.basis.base**self.basis.n_digits, dtype=self.amplitudes.dtype)
        full[self.basis.states] = self.amplitudes
        return full


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Sparse matrix (CSR, column-sorted, duplicates summed) acting on one basis."""

    basis: SectorBasis
    matrix: sp.csr_matrix
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix)
        m.sum_duplicates()
        m.sort_indices()
        m.eliminate_zeros()
        if m.shape != (self.basis.dim, self.basis.dim):
            raise SectorError(f"matrix shape {m.shape} does not match basis dim {self.basis.dim}")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self):
        return self.basis.dim

    @cached_property
    def hermiticity_error(self):
        d = self.matrix - self.matrix.conj().T
        return float(abs(d).max()) if d.nnz else 0.0

    @property
    def is_hermitian(self):
        return self.hermiticity_error < 1e-14 * max(1.0, self.norm_bound)

    @cached_property
    def norm_bound(self):
        """Cheap upper bound on the spectral norm (max absolute row sum)."""
        if self.matrix.nnz == 0:
            return 0.0
        return float(abs(self.matrix).sum(axis=1).max())

    def dot(self, vec):
        return kernels.csr_matvec(self.matrix, vec)

    def __matmul__(self, other):
        if isinstance(other, StateVector):
            return apply_operator(self, other)
        return self.matrix @ other

    def toarray(self):
        return self.matrix.toarray()


def apply_operator(op, state):
    """Exact sparse matvec ``op |state>``."""
    if op.dim != state.basis.dim:
        raise SectorError(f"operator dim {op.dim} does not match state dim {state.basis.dim}")
    if not op.basis.same_space(state.basis):
        raise SectorError("operator and state are defined on different sectors")
    return StateVector(state.basis, op.dot(state.amplitudes))


def operator_from_terms(basis, terms, label="", check_closed=True):
    """Assemble a sum of local terms over ``basis`` into a SparseOperator.

    ``terms`` is a list of ``(sites, matrix)`` in the basis' digit convention.
    A transition leaving the sector raises :class:`SectorError` when
    ``check_closed`` is set (magnetization/excitation conservation check).
    """
    rows, cols, vals, missing = kernels.assemble(basis.states, basis.base, basis.n_digits, terms)
    if missing and check_closed:
        raise SectorError(f"{missing} matrix elements leave the sector; operator does not conserve it")
    m = sp.coo_matrix((vals, (rows, cols)), shape=(basis.dim, basis.dim)).tocsr()
    return SparseOperator(basis, m, label=label)
