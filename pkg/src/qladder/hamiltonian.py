"""Sparse Hamiltonians: the ideal XY ladder, the transmon (bosonic) device model
and the range-2 XY ladder.

Conventions shared by every builder:

* energies in MHz (already divided by 2 pi); the propagator supplies the 2 pi;
* ``(J/2)(x x + y y)`` between two qubits is an off-diagonal element ``J``;
* ``omega_k sigma^z`` is diagonal with ``sigma^z |1> = +1``;
* the bottom row always receives ``-J_{e,k}``; callers pass the top-row sign.
"""

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .basis import RUNG_DIMER_MATRIX, enumerate_sector
from .core import SectorError, operator_from_terms

# single-qubit operators in the digit basis (0 = empty, 1 = excited)
_I2 = np.eye(2)
_X = np.array([[0.0, 1.0], [1.0, 0.0]])
_Y = np.array([[0.0, 1j], [-1j, 0.0]])  # [out, in]; sigma^y|1> = i|0>
_Z = np.diag([-1.0, 1.0])
_PAULI = {"i": _I2, "x": _X, "y": _Y, "z": _Z}


def _kron_bits(ops, nbits):
    """Kronecker product acting on ``nbits`` qubits; bit ``j`` has weight ``2**j``."""
    mats = [ops.get(j, _I2) for j in range(nbits)]
    return reduce(np.kron, mats[::-1])


def _pauli_pair(a, b, nbits, pa, pb):
    return _kron_bits({pa: _PAULI[a], pb: _PAULI[b]}, nbits)


def _xy(jx, jy, nbits, pa, pb):
    m = jx * _pauli_pair("x", "x", nbits, pa, pb) + jy * _pauli_pair("y", "y", nbits, pa, pb)
    return _real(m)


def _real(m):
    if np.abs(np.imag(m)).max(initial=0.0) > 1e-15:
        raise AssertionError("local term unexpectedly complex")
    return np.real(m).astype(float)


# ---------------------------------------------------------------------------
# configurations
# ---------------------------------------------------------------------------


def _floats(values, name):
    arr = tuple(float(v) for v in np.atleast_1d(np.asarray(values, dtype=float)))
    if not all(math.isfinite(v) for v in arr):
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class CouplingConfig:
    """Ideal-ladder couplings in MHz.

    ``J_e`` has ``M-1`` entries (top-row sign), ``omega`` has ``M``.
    """

    J_a: float
    J_e: tuple
    omega: tuple

    def __post_init__(self):
        object.__setattr__(self, "J_a", float(self.J_a))
        if not math.isfinite(self.J_a):
            raise ValueError("J_a must be finite")
        object.__setattr__(self, "J_e", _floats(self.J_e, "J_e") if len(np.atleast_1d(self.J_e)) else ())
        object.__setattr__(self, "omega", _floats(self.omega, "omega"))
        if len(self.J_e) != len(self.omega) - 1:
            raise ValueError(f"J_e needs {len(self.omega) - 1} entries for M={len(self.omega)}, got {len(self.J_e)}")

    @property
    def M(self):
        return len(self.omega)

    def check(self, spec):
        if spec.M != self.M:
            raise SectorError(f"couplings are for M={self.M}, ladder has M={spec.M}")

    @property
    def omega_bar(self):
        return omega_bar(self.omega)

    def replace(self, **kw):
        d = {"J_a": self.J_a, "J_e": self.J_e, "omega": self.omega}
        d.update(kw)
        return CouplingConfig(**d)

    @classmethod
    def uniform(cls, M, J_a, J_e, omega=0.0):
        return cls(J_a, [J_e] * (M - 1), [omega] * M)


def omega_bar(omega):
    """``omega_k - mean(omega)`` with the mean accumulated by ``math.fsum``."""
    w = np.asarray(omega, dtype=float)
    return w - math.fsum(w) / w.size


@dataclass(frozen=True)
class PerturbationConfig:
    """Device imperfections for the bosonic model.

    ``J_x`` lists the diagonal couplings in the order
    ``u1-d2, d1-u2, u2-d3, d2-u3, ...`` (two per neighbouring rung pair).
    """

    J_x: tuple = ()
    eta: float = -175.0
    cross: bool = True
    nonlinear: bool = True

    def __post_init__(self):
        object.__setattr__(self, "J_x", _floats(self.J_x, "J_x") if len(np.atleast_1d(self.J_x)) else ())
        object.__setattr__(self, "eta", float(self.eta))

    def check(self, spec):
        if self.cross and len(self.J_x) != 2 * (spec.M - 1):
            raise ValueError(f"J_x needs {2 * (spec.M - 1)} entries, got {len(self.J_x)}")


@dataclass(frozen=True)
class Range2Config:
    J1x: tuple
    J1y: tuple
    J2x: tuple
    J2y: tuple
    rung: float = 0.5  # prefactor of (x x + y y) on every rung

    def __post_init__(self):
        for name in ("J1x", "J1y", "J2x", "J2y"):
            v = getattr(self, name)
            object.__setattr__(self, name, _floats(v, name) if len(np.atleast_1d(v)) else ())

    def check(self, spec):
        M = spec.M
        if len(self.J1x) != M - 1 or len(self.J1y) != M - 1:
            raise ValueError(f"J1x/J1y need {M - 1} entries")
        if len(self.J2x) != max(M - 2, 0) or len(self.J2y) != max(M - 2, 0):
            raise ValueError(f"J2x/J2y need {max(M - 2, 0)} entries")


# ---------------------------------------------------------------------------
# local terms
# ---------------------------------------------------------------------------

IDEAL_PARTS = ("u", "d", "int")


def hop_matrix(J):
    """Two-qubit ``(J/2)(xx + yy)``; local index ``digit_a + 2 digit_b``."""
    return _xy(J / 2, J / 2, 2, 0, 1)


def ideal_terms(spec, couplings, parts=IDEAL_PARTS):
    """Local terms of the ideal model on computational sites."""
    couplings.check(spec)
    M = spec.M
    terms = []
    for k in range(1, M + 1):
        if "u" in parts and couplings.omega[k - 1] != 0.0:
            terms.append(((spec.up(k),), couplings.omega[k - 1] * _Z))
        if "d" in parts and couplings.omega[k - 1] != 0.0:
            terms.append(((spec.down(k),), couplings.omega[k - 1] * _Z))
        if "int" in parts and couplings.J_a != 0.0:
            terms.append(((spec.up(k), spec.down(k)), hop_matrix(couplings.J_a)))
    for k in range(1, M):
        J = couplings.J_e[k - 1]
        if J == 0.0:
            continue
        if "u" in parts:
            terms.append(((spec.up(k), spec.up(k + 1)), hop_matrix(J)))
        if "d" in parts:
            terms.append(((spec.down(k), spec.down(k + 1)), hop_matrix(-J)))
    return terms


def _rung_local(spec, couplings, k, parts):
    """4x4 single-rung term on fock rung index ``u + 2 d``."""
    m = np.zeros((4, 4))
    w = couplings.omega[k - 1]
    if "u" in parts:
        m += w * _kron_bits({0: _Z}, 2)
    if "d" in parts:
        m += w * _kron_bits({1: _Z}, 2)
    if "int" in parts:
        m += _xy(couplings.J_a / 2, couplings.J_a / 2, 2, 0, 1)
    return m


def _row_local(J, parts):
    """16x16 two-rung row hopping on (u_k, d_k, u_{k+1}, d_{k+1}) bits 0..3."""
    m = np.zeros((16, 16))
    if "u" in parts:
        m += _xy(J / 2, J / 2, 4, 0, 2)
    if "d" in parts:
        m += _xy(-J / 2, -J / 2, 4, 1, 3)
    return m


def dimer_terms(spec, couplings, parts=IDEAL_PARTS):
    """Local terms of the ideal model on rung digits in the H/D/T/S basis."""
    couplings.check(spec)
    U = RUNG_DIMER_MATRIX
    UU = np.kron(U, U)
    terms = []
    for k in range(1, spec.M + 1):
        m = U.T @ _rung_local(spec, couplings, k, parts) @ U
        m[np.abs(m) < 1e-15] = 0.0
        if np.any(m):
            terms.append(((k - 1,), m))
    for k in range(1, spec.M):
        m = UU.T @ _row_local(couplings.J_e[k - 1], parts) @ UU
        m[np.abs(m) < 1e-15] = 0.0
        if np.any(m):
            terms.append(((k - 1, k), m))
    return terms


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def build_ideal(spec, couplings, sector=None, parts=IDEAL_PARTS):
    """Ideal ladder Hamiltonian on a computational or dimer sector.

    ``parts`` selects a subset of ``("u", "d", "int")``: top row, bottom
    row and rung coupling. The default is the full model at half filling.
    """
    if spec.local_dim != 2:
        raise SectorError("build_ideal needs local_dim = 2; use build_experimental for qutrits")
    if sector is None:
        sector = enumerate_sector(spec, spec.M)
    if sector.spec != spec:
        raise SectorError("sector belongs to a different ladder")
    if sector.kind == "dimer":
        terms = dimer_terms(spec, couplings, parts)
    else:
        terms = ideal_terms(spec, couplings, parts)
    op = operator_from_terms(sector, terms, label="H_ideal")
    op.meta.update(model="ideal", parts=tuple(parts), couplings=couplings)
    return op


def build_row_field(spec, weights, sector, row="u"):
    """``sum_k weights_k sigma^z`` on the top (``"u"``) or bottom (``"d"``) row."""
    weights = np.asarray(weights, dtype=float)
    if weights.size != spec.M:
        raise ValueError(f"need {spec.M} weights")
    site = spec.up if row == "u" else spec.down
    if sector.kind == "dimer":
        U = RUNG_DIMER_MATRIX
        z = _kron_bits({0 if row == "u" else 1: _Z}, 2)
        terms = [((k - 1,), w * (U.T @ z @ U)) for k, w in zip(range(1, spec.M + 1), weights) if w != 0.0]
    else:
        terms = [((site(k),), w * _Z) for k, w in zip(range(1, spec.M + 1), weights) if w != 0.0]
    return operator_from_terms(sector, terms, label=f"Z_{row}")


def _boson_ops(dim=3):
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1)  # a[n-1, n] = sqrt(n)
    return a, np.diag(np.arange(dim, dtype=float))


def boson_hop(J, dim=3):
    """``J (a^dag b + b^dag a)`` with local index ``n_a + dim * n_b``."""
    a, _ = _boson_ops(dim)
    eye = np.eye(dim)
    adag_b = np.kron(a, eye) @ np.kron(eye, a.T)  # b on the high digit, a^dag on the low digit
    return J * (adag_b + adag_b.T)


def build_experimental(spec, couplings, perturbations=None, sector=None):
    """Transmon ladder with up to two photons per site.

    Spin terms are mapped as ``(J/2)(xx+yy) -> J (a^dag b + h.c.)`` and
    ``omega sigma^z -> omega (2 n - 1)``; on the one-photon subspace this
    reproduces :func:`build_ideal` exactly. Perturbations add the diagonal
    couplings ``J_x`` and the on-site ``(eta/2) n (n - 1)``.
    """
    if spec.local_dim != 3:
        raise SectorError("build_experimental needs local_dim = 3")
    couplings.check(spec)
    pert = perturbations if perturbations is not None else PerturbationConfig(cross=False, nonlinear=False)
    pert.check(spec)
    if sector is None:
        sector = enumerate_sector(spec, spec.M)
    _, n = _boson_ops(3)
    terms = []
    for k in range(1, spec.M + 1):
        onsite = couplings.omega[k - 1] * (2 * n - np.eye(3))
        if pert.nonlinear:
            onsite = onsite + 0.5 * pert.eta * n @ (n - np.eye(3))
        for s in (spec.up(k), spec.down(k)):
            if np.any(onsite):
                terms.append(((s,), onsite))
        if couplings.J_a != 0.0:
            terms.append(((spec.up(k), spec.down(k)), boson_hop(couplings.J_a)))
    for k in range(1, spec.M):
        J = couplings.J_e[k - 1]
        if J != 0.0:
            terms.append(((spec.up(k), spec.up(k + 1)), boson_hop(J)))
            terms.append(((spec.down(k), spec.down(k + 1)), boson_hop(-J)))
        if pert.cross:
            jx1, jx2 = pert.J_x[2 * (k - 1)], pert.J_x[2 * (k - 1) + 1]
            if jx1 != 0.0:
                terms.append(((spec.up(k), spec.down(k + 1)), boson_hop(jx1)))
            if jx2 != 0.0:
                terms.append(((spec.down(k), spec.up(k + 1)), boson_hop(jx2)))
    op = operator_from_terms(sector, terms, label="H_exp")
    op.meta.update(model="experimental", couplings=couplings, perturbations=pert)
    return op


def range2_terms(spec, cfg, parts=IDEAL_PARTS):
    cfg.check(spec)
    M = spec.M
    terms = []
    for j in range(1, M):
        for row, sign, site in (("u", 1.0, spec.up), ("d", -1.0, spec.down)):
            if row in parts:
                terms.append(((site(j), site(j + 1)), sign * _xy(cfg.J1x[j - 1], cfg.J1y[j - 1], 2, 0, 1)))
    for j in range(1, M - 1):
        for row, sign, site in (("u", 1.0, spec.up), ("d", -1.0, spec.down)):
            if row in parts:
                terms.append(((site(j), site(j + 2)), sign * _xy(cfg.J2x[j - 1], cfg.J2y[j - 1], 2, 0, 1)))
    if "int" in parts and cfg.rung != 0.0:
        for k in range(1, M + 1):
            terms.append(((spec.up(k), spec.down(k)), _xy(cfg.rung, cfg.rung, 2, 0, 1)))
    return terms


def build_range2(spec, cfg, sector=None, parts=IDEAL_PARTS):
    """Range-2 XY ladder (nearest and next-nearest row couplings, bottom row negated).

    Anisotropic ``J_x != J_y`` couplings create and destroy excitation
    pairs, so the natural sectors are the full space (default) or a parity
    sector from :func:`basis.enumerate_parity_sector`.
    """
    if spec.local_dim != 2:
        raise SectorError("build_range2 needs local_dim = 2")
    if sector is None:
        from .basis import enumerate_full

        sector = enumerate_full(spec)
    op = operator_from_terms(sector, range2_terms(spec, cfg, parts), label="H_range2")
    op.meta.update(model="range2", parts=tuple(parts), config=cfg)
    return op
