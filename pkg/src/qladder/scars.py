"""Analytic scar eigenstates, their energies, overlaps and entanglement spectra.

First family: ``|E_n>`` is the normalized symmetric sum over all T/S strings
with ``n`` triplets, energy ``J_a (2n - M)``.

Second family: ``|E'_n>`` (``1 <= n <= M-1``) mixes one neighbouring
doublon-holon pair on an otherwise T/S background with an omega-bar
weighted T/S part, again at energy ``J_a (2n - M)``.
"""

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import basis as B
from .core import StateVector
from .hamiltonian import CouplingConfig, build_ideal, build_range2, build_row_field, omega_bar

H_, D_, T_, S_ = 0, 1, 2, 3


@dataclass(frozen=True, eq=False)
class ScarState:
    family: object  # 1, 2 or a range-2 label such as "I_T"
    n: int | None
    state: StateVector
    energy: float
    method: str
    degenerate: bool = False  # True when the construction collapses to zero


@dataclass(frozen=True)
class EntanglementSpectrum:
    probabilities: np.ndarray
    entropy: float

    @classmethod
    def from_probabilities(cls, p):
        p = np.asarray(p, dtype=float)
        nz = p[p > 0]
        return cls(p, float(-np.sum(nz * np.log(nz))))


# ---------------------------------------------------------------------------
# dimer-string helpers
# ---------------------------------------------------------------------------


def _code(symbols):
    return sum(int(s) * 4**k for k, s in enumerate(symbols))


def _ts_strings(positions, n_triplets):
    """Yield (triplet positions, list of (position, symbol)) over ``positions``."""
    for tset in combinations(positions, n_triplets):
        ts = set(tset)
        yield tset, [(p, T_ if p in ts else S_) for p in positions]


def _dimer_vector(spec, amps):
    """Half-filling computational state from ``{dimer code: amplitude}``."""
    tr = B.dimer_transform(spec)
    v = np.zeros(tr.dimer_basis.dim)
    codes = np.fromiter(amps.keys(), dtype=np.int64, count=len(amps))
    v[tr.dimer_basis.rank(codes)] = np.fromiter(amps.values(), dtype=float, count=len(amps))
    return tr.to_fock(v)


def _check_n(n, lo, hi):
    if int(n) != n or not lo <= n <= hi:
        raise ValueError(f"n={n} outside [{lo}, {hi}]")


def scar_energy(couplings, n):
    return couplings.J_a * (2 * n - couplings.M)


# ---------------------------------------------------------------------------
# first family
# ---------------------------------------------------------------------------


def first_family_state(spec, n, method="direct", J_a=1.0):
    """``|E_n>``; ``J_a`` only sets the reported energy."""
    M = spec.M
    _check_n(n, 0, M)
    if method == "direct":
        amps = {}
        for _, syms in _ts_strings(range(M), n):
            amps[_code([s for _, s in sorted(syms)])] = 1.0
        psi = _dimer_vector(spec, amps).normalized()
    elif method == "recursive":
        # lower from |T...T> with the projected collective u^z
        Z = build_row_field(spec, np.ones(M), B.half_filling(spec), row="u")
        psi = _dimer_vector(spec, {_code([T_] * M): 1.0})
        for m in range(M - 1, n - 1, -1):
            psi = B.project_charge(Z @ psi, 2 * m - M).state.normalized()
    else:
        raise ValueError(f"unknown method {method!r}")
    return ScarState(1, n, psi.with_phase_convention(), J_a * (2 * n - M), method)


# ---------------------------------------------------------------------------
# second family
# ---------------------------------------------------------------------------


def scar_normalization(spec, couplings, n):
    """Closed-form norm of the unnormalized explicit ``|E'_n>`` sum."""
    M = spec.M
    couplings.check(spec)
    _check_n(n, 1, M - 1)
    wb = omega_bar(couplings.omega)
    inner = 0.5 * math.fsum(j * j for j in couplings.J_e) + math.fsum(w * w for w in wb)
    return math.sqrt(math.comb(M - 2, n - 1) * inner)


def _second_explicit_amplitudes(spec, couplings, n):
    M = spec.M
    wb = omega_bar(couplings.omega)
    amps = {}
    for k in range(M - 1):
        rest = [p for p in range(M) if p not in (k, k + 1)]
        a = couplings.J_e[k] / 2
        if a == 0.0:
            continue
        for _, syms in _ts_strings(rest, n - 1):
            for pair in ((H_, D_), (D_, H_)):
                full = dict(syms)
                full[k], full[k + 1] = pair
                c = _code([full[p] for p in range(M)])
                amps[c] = amps.get(c, 0.0) + a
    for tset, syms in _ts_strings(range(M), n):
        a = math.fsum(wb[p] for p in tset)
        if a != 0.0:
            c = _code([s for _, s in sorted(syms)])
            amps[c] = amps.get(c, 0.0) + a
    return amps


def _generator(spec, couplings, sector):
    """``H_u - mean(omega) Z_u``: top-row hopping plus omega-bar weighted u^z."""
    hop = build_ideal(spec, couplings.replace(omega=[0.0] * spec.M), sector, parts=("u",))
    field = build_row_field(spec, omega_bar(couplings.omega), sector, row="u")
    return hop.matrix + field.matrix


def charge_label(M, n, convention=1):
    """Projector label and the operator sign used for ``|E'_n>``.

    ``convention=+1``: project ``Q`` onto ``2n - M``.
    ``convention=-1``: project ``-Q`` onto ``M - 2n`` (same subspace).
    """
    if convention not in (1, -1):
        raise ValueError("convention must be +1 or -1")
    label = (2 * n - M) * convention
    return label, convention


def second_family_state(spec, couplings, n, method="explicit", convention=1):
    """``|E'_n>`` by the explicit sum, by raising from ``|E_{n-1}>`` or lowering from ``|E_{n+1}>``.

    A vanishing construction (all ``J_e = 0`` and uniform ``omega``) is
    returned as a zero vector with ``degenerate=True``.
    """
    M = spec.M
    couplings.check(spec)
    if M < 3:
        raise ValueError("the second family needs M >= 3")
    _check_n(n, 1, M - 1)
    energy = scar_energy(couplings, n)
    sector = B.half_filling(spec)
    if method == "explicit":
        Nn = scar_normalization(spec, couplings, n)
        if Nn == 0.0:
            return ScarState(2, n, StateVector(sector, np.zeros(sector.dim)), energy, method, True)
        psi = _dimer_vector(spec, _second_explicit_amplitudes(spec, couplings, n))
        psi = StateVector(sector, psi.amplitudes / Nn)
    elif method in ("raise", "lower"):
        seed = first_family_state(spec, n - 1 if method == "raise" else n + 1).state
        K = _generator(spec, couplings, sector)
        label, sign = charge_label(M, n, convention)
        raw = StateVector(sector, K @ seed.amplitudes)
        psi = B.project_charge(raw, label * sign).state
        if psi.norm < 1e-12 * max(1.0, np.abs(K).max()):
            return ScarState(2, n, StateVector(sector, np.zeros(sector.dim)), energy, method, True)
        psi = psi.normalized()
    else:
        raise ValueError(f"unknown method {method!r}")
    return ScarState(2, n, psi.with_phase_convention(), energy, method)


def scar_tower(spec, couplings, family=(1, 2)):
    """All scars of the requested families in ascending ``n``."""
    out = []
    if 1 in family:
        out += [first_family_state(spec, n, J_a=couplings.J_a) for n in range(spec.M + 1)]
    if 2 in family and spec.M >= 3:
        out += [second_family_state(spec, couplings, n) for n in range(1, spec.M)]
    return out


def verify_eigenstate(H, state):
    """Rayleigh energy and residual norm ``||H psi - E psi||`` of a normalized state."""
    psi = state.state if isinstance(state, ScarState) else state
    nrm = psi.norm
    if nrm == 0.0:
        raise ValueError("cannot verify the zero state")
    v = psi.amplitudes / nrm
    hv = H.dot(v) if hasattr(H, "dot") else H @ v
    E = float(np.real(np.vdot(v, hv)))
    return E, float(np.linalg.norm(hv - E * v))


# ---------------------------------------------------------------------------
# range-2 rainbow states
# ---------------------------------------------------------------------------

RANGE2_STATES = ("I", "I_T", "I_S", "I2_T", "I2_S")


def rainbow_states_range2(spec, cfg, which):
    """Rainbow eigenstates of the range-2 ladder on the full computational space."""
    if which not in RANGE2_STATES:
        raise ValueError(f"which must be one of {RANGE2_STATES}")
    M = spec.M
    full = B.enumerate_full(spec)
    if which == "I":
        # product of (|00> + |11>)/sqrt2 on every rung
        rung = np.zeros(4)
        rung[0] = rung[3] = 1 / np.sqrt(2)
        vec = _rung_product(rung, M)
        return ScarState("I", None, StateVector(full, vec), 0.0, "product")
    sym = T_ if which.endswith("T") else S_
    base = B.to_basis(_dimer_vector(spec, {_code([sym] * M): 1.0}), full)
    if which in ("I_T", "I_S"):
        e = float(M if sym == T_ else -M) * 2 * cfg.rung
        return ScarState(which, None, base.with_phase_convention(), e, "product")
    H1 = build_range2(spec, cfg, full, parts=("u",))
    psi = StateVector(full, H1.dot(base.amplitudes))
    e = float(M - 2 if sym == T_ else 2 - M) * 2 * cfg.rung
    return ScarState(which, None, psi.normalized().with_phase_convention(), e, "H1")


def _rung_product(rung, M):
    vec = np.ones(1)
    for _ in range(M):
        vec = np.kron(rung, vec)  # later rungs are more significant digits
    return vec


# ---------------------------------------------------------------------------
# closed-form entanglement
# ---------------------------------------------------------------------------


def first_family_entanglement_spectrum(R):
    """Schmidt spectrum of ``|E_R>`` (``M = 2R``) across the middle of the ladder."""
    if R < 1:
        raise ValueError("R must be >= 1")
    return first_family_schmidt_spectrum(2 * R, R, R)


def first_family_schmidt_spectrum(M, n, left):
    """Schmidt spectrum of ``|E_n>`` for a cut after rung ``left``.

    The symmetric T/S superposition splits into ``k`` triplets on the left
    and ``n - k`` on the right, so the weights are hypergeometric; the
    middle cut of ``|E_R>`` gives ``C(R,k)^2 / C(2R,R)``.
    """
    if not 0 <= n <= M or not 0 <= left <= M:
        raise ValueError("need 0 <= n <= M and 0 <= left <= M")
    den = math.comb(M, n)
    ks = range(max(0, n - (M - left)), min(n, left) + 1)
    return EntanglementSpectrum.from_probabilities([math.comb(left, k) * math.comb(M - left, n - k) / den for k in ks])


def second_family_entanglement_bounds(M, regime, J_e=1.0):
    """Closed-form Schmidt spectrum of ``|E'_R>`` in the two extremal coupling patterns.

    ``max``: every ``J_{e,k} = 1`` except the middle bond ``J_{e,R} = J_e``, omega-bar zero.
    ``min``: ``J_{e,k} = delta_{k,1}``.
    """
    if M % 2 or M < 4:
        raise ValueError("M must be even and >= 4")
    R = M // 2
    den = math.comb(2 * R - 2, R - 1)
    if regime == "min":
        p = [math.comb(R - 2, k) * math.comb(R, k + 1) / den for k in range(R - 1)]
    elif regime == "max":
        x = J_e * J_e + M - 2
        pdh = [J_e * J_e / (2 * x) * math.comb(R - 1, k) ** 2 / den for k in range(R)]
        p1 = [(R - 1) / x * math.comb(R - 2, k) * math.comb(R, k + 1) / den for k in range(R - 1)]
        p = pdh + pdh + p1 + p1
    else:
        raise ValueError("regime must be 'max' or 'min'")
    return EntanglementSpectrum.from_probabilities(p)


def regime_couplings(M, regime, J_e=1.0, J_a=1.0):
    """Couplings that realize the extremal patterns above (uniform omega)."""
    R = M // 2
    if regime == "max":
        je = [1.0] * (M - 1)
        je[R - 1] = J_e
    elif regime == "min":
        je = [1.0 if k == 0 else 0.0 for k in range(M - 1)]
    else:
        raise ValueError("regime must be 'max' or 'min'")
    return CouplingConfig(J_a, je, [0.0] * M)


def scar_entropy_asymptote(M):
    """Large-M entropy of the zero-energy first-family scar across the middle cut."""
    if M <= 0:
        raise ValueError("M must be positive")
    return 0.5 + 0.5 * math.log(math.pi * M / 8)


# ---------------------------------------------------------------------------
# overlaps
# ---------------------------------------------------------------------------

OVERLAP_STATES = ("Pi", "Pi'", "phi_L", "phi_J", "phi'_J", "phi")


def scar_overlaps(spec, couplings, which_state, family):
    """Closed-form ``|<state|scar_n>|^2`` as a list of ``(n, value)``."""
    M = spec.M
    couplings.check(spec)
    if which_state not in OVERLAP_STATES:
        raise ValueError(f"which_state must be one of {OVERLAP_STATES}")
    if family == 1:
        if which_state in ("Pi", "Pi'"):
            return [(n, math.comb(M, n) / 2**M) for n in range(M + 1)]
        return [(n, 0.0) for n in range(M + 1)]
    if family != 2:
        raise ValueError("family must be 1 or 2")
    if M < 3:
        raise ValueError("the second family needs M >= 3")
    ns = range(1, M)
    if which_state in ("Pi", "Pi'"):
        return [(n, 0.0) for n in ns]
    wb = omega_bar(couplings.omega)
    sj2 = math.fsum(j * j for j in couplings.J_e)
    den = sj2 + 2 * math.fsum(w * w for w in wb)
    if den == 0.0:
        return [(n, 0.0) for n in ns]
    if which_state == "phi_L":
        num = couplings.J_e[0] ** 2
    elif which_state == "phi":
        num = math.fsum(couplings.J_e) ** 2 / (M - 1)
    else:
        num = sj2
    return [(n, math.comb(M - 2, n - 1) / 2 ** (M - 2) * num / den) for n in ns]


def numerical_overlaps(state, scars):
    """``|<state|scar>|^2`` for each constructed scar (same basis)."""
    return [(s.n, abs(state.vdot(s.state)) ** 2) for s in scars]

