"""Dense diagonalization per sector, level statistics, eigenstate entropy scans and overlap maps."""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy import stats

from . import basis as B
from .core import SectorError, StateVector
from .dynamics import entanglement_entropy

DEFAULT_CAP = 50_000
POISSON_R = 2 * math.log(2) - 1
GOE_R = 0.5307


@dataclass(eq=False)
class EigenSystem:
    basis: object
    energies: np.ndarray
    vectors: np.ndarray | None = None  # columns, same order as energies
    residual: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def descriptor(self):
        return self.basis.describe()

    def state(self, i):
        return StateVector(self.basis, self.vectors[:, i])


def diagonalize_sector(H, sector=None, with_vectors=True, energy_window=None, cap=DEFAULT_CAP):
    """Dense Hermitian diagonalization of one sector.

    ``energy_window=(lo, hi)`` restricts the returned pairs to ``lo < E <= hi``
    (LAPACK ``evr``), which keeps memory bounded at N = 18 when vectors are
    needed only near the middle of the spectrum.
    """
    if sector is not None and not sector.same_space(H.basis):
        raise SectorError("Hamiltonian is not defined on the requested sector")
    n = H.dim
    if n > cap:
        raise SectorError(f"sector dimension {n} exceeds the cap {cap}; split it by the charge Q first")
    # LAPACK wants Fortran order; the transpose of the C-ordered dense matrix
    # is a Fortran view of conj(H), which avoids a second n x n copy
    a = H.toarray().T
    conjugated = np.iscomplexobj(a)
    kw = {"overwrite_a": True, "check_finite": False}
    if energy_window is not None:
        kw.update(subset_by_value=tuple(energy_window), driver="evr")
    if with_vectors:
        E, V = sla.eigh(a, **kw)
        del a
        if conjugated:
            V = V.conj()
        res = float(np.linalg.norm(H.matrix @ V - V * E, axis=0).max(initial=0.0))
    else:
        E = sla.eigh(a, eigvals_only=True, **kw)
        V, res = None, None
    return EigenSystem(H.basis, E, V, res, {"dim": n, "norm_bound": H.norm_bound})


def prune_degeneracies(energies, degeneracy_tol=None):
    """Sorted energies with levels closer than the tolerance merged."""
    e = np.sort(np.asarray(energies, dtype=float))
    if e.size < 2:
        return e
    tol = 1e-10 * (e[-1] - e[0]) if degeneracy_tol is None else degeneracy_tol
    keep = np.concatenate([[True], np.diff(e) > tol])
    return e[keep]


def level_spacing_ratio(energies, degeneracy_tol=None):
    """``(mean r, r values)`` with ``r_n = min(d_n, d_{n+1}) / max(d_n, d_{n+1})``."""
    e = prune_degeneracies(energies, degeneracy_tol)
    d = np.diff(e)
    if d.size < 2:
        raise ValueError("need at least three distinct levels")
    r = np.minimum(d[:-1], d[1:]) / np.maximum(d[:-1], d[1:])
    return float(r.mean()), r


def wigner_surmise(s):
    s = np.asarray(s, dtype=float)
    return 0.5 * math.pi * s * np.exp(-0.25 * math.pi * s * s)


def wigner_cdf(s):
    s = np.asarray(s, dtype=float)
    return 1.0 - np.exp(-0.25 * math.pi * s * s)


def normalized_spacings(energies, mode="raw", degree=7, degeneracy_tol=None):
    """Spacings with unit mean. ``mode="unfold"`` first maps levels through a
    degree-``degree`` polynomial fit of the cumulative level count."""
    e = prune_degeneracies(energies, degeneracy_tol)
    if mode == "raw":
        d = np.diff(e)
        return d / d.mean()
    if mode == "unfold":
        x = (e - e.mean()) / (e.std() or 1.0)
        fit = np.polynomial.Polynomial.fit(x, np.arange(e.size, dtype=float), degree)
        d = np.diff(fit(x))
        return d / d.mean()
    raise ValueError(f"mode must be 'raw' or 'unfold', got {mode!r}")


@dataclass
class SpacingHistogram:
    edges: np.ndarray
    density: np.ndarray
    centers: np.ndarray
    surmise: np.ndarray
    chi2: float
    dof: int
    p_value: float
    n_spacings: int


def spacing_histogram(energies, n_bins=40, mode="raw", s_max=4.0, degree=7, degeneracy_tol=None):
    """Normalized spacing histogram plus a chi-square test against the Wigner surmise.

    ``energies`` may be one spectrum or a list of spectra; each is normalized
    on its own and the spacings are pooled. Expected counts use the exact
    surmise CDF; bins expecting fewer than 5 counts are merged.
    """
    spectra = [energies] if np.ndim(energies[0]) == 0 else list(energies)
    s = np.concatenate([normalized_spacings(e, mode, degree, degeneracy_tol) for e in spectra])
    edges = np.linspace(0.0, s_max, n_bins + 1)
    counts, _ = np.histogram(s, edges)
    width = edges[1] - edges[0]
    density = counts / (s.size * width)
    centers = 0.5 * (edges[1:] + edges[:-1])
    # chi-square with an overflow bin so the expected counts sum to the sample size
    obs = np.append(counts, np.count_nonzero(s >= s_max)).astype(float)
    exp = s.size * np.append(np.diff(wigner_cdf(edges)), 1.0 - wigner_cdf(s_max))
    o_m, e_m = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(obs, exp):
        acc_o += o
        acc_e += e
        if acc_e >= 5.0:
            o_m.append(acc_o)
            e_m.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 and e_m:
        o_m[-1] += acc_o
        e_m[-1] += acc_e
    o_m, e_m = np.array(o_m), np.array(e_m)
    chi2 = float(np.sum((o_m - e_m) ** 2 / e_m))
    dof = max(o_m.size - 1, 1)
    return SpacingHistogram(edges, density, centers, wigner_surmise(centers), chi2, dof, float(stats.chi2.sf(chi2, dof)), int(s.size))


def degenerate_clusters(energies, tol):
    """Index ranges ``[(start, stop), ...]`` of runs of levels closer than ``tol``."""
    E = np.asarray(energies)
    breaks = np.flatnonzero(np.diff(E) > tol) + 1
    bounds = np.concatenate([[0], breaks, [E.size]])
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b - a > 1]


def resolve_degeneracies(eigsys, diagonal, tol=1e-9):
    """Rotate every degenerate block so that it diagonalizes ``diag(diagonal)``.

    ``diagonal`` is one weight per basis state (for example the number of
    doublons and holons of each dimer configuration). Inside an exactly
    degenerate eigenspace any orthonormal basis is valid; this picks the one
    labelled by the auxiliary quantity, which makes per-eigenstate quantities
    such as entropies well defined. Returns a new :class:`EigenSystem`.
    """
    if eigsys.vectors is None:
        raise ValueError("eigensystem has no vectors")
    w = np.asarray(diagonal, dtype=float)
    V = eigsys.vectors.copy()
    labels = np.full(V.shape[1], np.nan)
    for a, b in degenerate_clusters(eigsys.energies, tol):
        blk = V[:, a:b]
        small = blk.conj().T @ (w[:, None] * blk)
        vals, rot = np.linalg.eigh(0.5 * (small + small.conj().T))
        V[:, a:b] = blk @ rot
        labels[a:b] = vals
    meta = dict(eigsys.meta, resolved_labels=labels)
    return EigenSystem(eigsys.basis, eigsys.energies, V, eigsys.residual, meta)


def doublon_holon_count(basis):
    """Number of H or D rungs of every dimer configuration."""
    if basis.kind != "dimer":
        raise SectorError("doublon/holon counting needs a dimer-basis sector")
    return np.count_nonzero(basis.digits() < 2, axis=1).astype(float)


def page_entropy(M):
    """Mean half-cut entropy of a random pure state of 2M qubits (large-M form)."""
    return (2 * M * math.log(2) - 1) / 2


def fock_vectors(eigsys):
    """Eigenvectors re-expressed on the computational half-filling (or filling) sector."""
    b = eigsys.basis
    if eigsys.vectors is None:
        raise ValueError("eigensystem has no vectors")
    if b.kind == "fock":
        return b, eigsys.vectors
    tr = B.dimer_transform(b.spec, b.excitations, b.q)
    return tr.fock_basis, tr.matrix @ eigsys.vectors


def eigenstate_entropy_scan(eigsys, subset, block=256):
    """Rows ``(E, S_A)`` for every eigenvector, plus the two reference bounds.

    Vectors are moved to the computational basis ``block`` columns at a time.
    """
    if eigsys.vectors is None:
        raise ValueError("eigensystem has no vectors")
    b = eigsys.basis
    if b.kind == "fock":
        fb, conv = b, None
    else:
        tr = B.dimer_transform(b.spec, b.excitations, b.q)
        fb, conv = tr.fock_basis, tr.matrix
    n = eigsys.vectors.shape[1]
    S = np.empty(n)
    for a in range(0, n, block):
        vecs = eigsys.vectors[:, a : a + block]
        if conv is not None:
            vecs = conv @ vecs
        for i in range(vecs.shape[1]):
            S[a + i] = entanglement_entropy(StateVector(fb, vecs[:, i]), subset)
    M = fb.spec.M
    table = np.rec.fromarrays([eigsys.energies, S], names="energy,entropy")
    return table, {"page": page_entropy(M), "max_parallel": M * math.log(2), "subset": tuple(subset)}


def overlap_map(eigsys, state, merge_tol=None):
    """``(E, |<E|state>|^2)`` for every eigenvector of the system.

    With ``merge_tol`` the weights of levels closer than the tolerance are
    summed, which removes the arbitrary basis choice inside degenerate
    eigenspaces.
    """
    if eigsys.vectors is None:
        raise ValueError("eigensystem has no vectors")
    psi = state if state.basis.same_space(eigsys.basis) else B.to_basis(state, eigsys.basis)
    E = eigsys.energies
    ov = np.abs(eigsys.vectors.conj().T @ psi.amplitudes) ** 2
    if merge_tol is not None and E.size:
        group = np.concatenate([[0], np.cumsum(np.diff(E) > merge_tol)])
        starts = np.flatnonzero(np.diff(np.concatenate([[-1], group])))
        E, ov = E[starts], np.add.reduceat(ov, starts)
    return np.rec.fromarrays([E, ov], names="energy,overlap")
