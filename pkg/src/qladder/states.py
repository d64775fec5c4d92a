"""Named initial states for quenches.

Fock-string grammar: one character per site in the order ``u1 d1 u2 d2 ...``;
``0``/``1``/``2`` give the occupation (``2`` only for qutrit ladders), and
``|``, ``_`` and whitespace are ignored so ``"10|10|10"`` groups rungs.
The glyphs ``•``/``●`` and ``◦``/``○`` are accepted as 1 and 0.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .basis import enumerate_sector
from .core import SectorError, StateVector

_GLYPHS = {"0": 0, "1": 1, "2": 2, "•": 1, "●": 1, "◦": 0, "○": 0}
_IGNORED = set("|_ \t\r\n")

KINDS = ("Pi", "Pi'", "phi_L", "phi_J", "phi'_J", "phi", "fock")
_ALIASES = {"Π": "Pi", "Π'": "Pi'", "Π′": "Pi'", "phi'_J": "phi'_J", "φ_L": "phi_L", "φ_J": "phi_J", "φ'_J": "phi'_J", "φ′_J": "phi'_J", "φ": "phi"}


@dataclass(frozen=True, eq=False)
class NamedState:
    name: str
    state: StateVector
    meta: dict = field(default_factory=dict)


def parse_fock_string(spec, text):
    """Digits (one per site) of a Fock string; raises ``ValueError`` on bad input."""
    digits = []
    for pos, ch in enumerate(text):
        if ch in _IGNORED:
            continue
        if ch not in _GLYPHS:
            raise ValueError(f"invalid character {ch!r} at position {pos} in Fock string {text!r}")
        d = _GLYPHS[ch]
        if d >= spec.local_dim:
            raise ValueError(f"occupation {d} exceeds local_dim {spec.local_dim} at position {pos}")
        digits.append(d)
    if len(digits) != spec.N:
        raise ValueError(f"Fock string has {len(digits)} sites, ladder has {spec.N}")
    return digits


def fock_code(spec, digits):
    return int(sum(d * spec.local_dim**i for i, d in enumerate(digits)))


def fock_string(spec, code):
    out = []
    for k in range(spec.M):
        u = (code // spec.local_dim ** (2 * k)) % spec.local_dim
        d = (code // spec.local_dim ** (2 * k + 1)) % spec.local_dim
        out.append(f"{u}{d}")
    return "|".join(out)


def _superposition(spec, configs, excitations=None):
    """State from ``[(digits, amplitude), ...]`` on the matching excitation sector."""
    exc = {sum(d) for d, _ in configs}
    if len(exc) != 1:
        raise SectorError("configurations have different excitation numbers")
    (n_exc,) = exc
    if excitations is not None and excitations != n_exc:
        raise SectorError(f"state has {n_exc} excitations, expected {excitations}")
    sector = enumerate_sector(spec, n_exc)
    amps = np.zeros(sector.dim)
    for d, a in configs:
        amps[sector.index(fock_code(spec, d))] += a
    return StateVector(sector, amps)


def _pair_configs(spec, background, weights):
    """Doublon-holon pairs on rungs (k, k+1) over a uniform singly occupied background."""
    M = spec.M
    out = []
    for k, w in enumerate(weights):
        if w == 0.0:
            continue
        for pair in (((1, 1), (0, 0)), ((0, 0), (1, 1))):
            rungs = [background] * M
            rungs[k], rungs[k + 1] = pair
            out.append(([x for r in rungs for x in r], w))
    return out


def make_initial(spec, kind, couplings=None, fock=None, excitations=None):
    """Build a named initial state.

    kinds: ``Pi`` (every rung u=1, d=0), ``Pi'`` (u=0, d=1), ``phi_L``,
    ``phi_J``, ``phi'_J``, ``phi`` (doublon-holon pair superpositions) and
    ``fock`` (``fock`` holds the string).
    """
    kind = _ALIASES.get(kind, kind)
    M = spec.M
    if kind not in KINDS:
        raise ValueError(f"unknown initial state {kind!r}; expected one of {KINDS}")
    if kind == "fock":
        if fock is None:
            raise ValueError("kind 'fock' needs a Fock string")
        digits = parse_fock_string(spec, fock)
        return NamedState(f"fock:{fock}", _superposition(spec, [(digits, 1.0)], excitations), {"fock": fock})
    if kind in ("Pi", "Pi'"):
        rung = (1, 0) if kind == "Pi" else (0, 1)
        st = _superposition(spec, [(list(rung) * M, 1.0)], excitations)
        return NamedState(kind, st)
    if M < 3:
        raise ValueError(f"{kind} needs M >= 3")
    if kind == "phi_L":
        w = [1 / math.sqrt(2)] + [0.0] * (M - 2)
        bg = (0, 1)
    elif kind == "phi":
        w = [1 / math.sqrt(2 * (M - 1))] * (M - 1)
        bg = (0, 1)
    else:
        if couplings is None:
            raise ValueError(f"{kind} needs couplings")
        couplings.check(spec)
        z = math.sqrt(2 * math.fsum(j * j for j in couplings.J_e))
        if z == 0.0:
            raise ValueError(f"{kind} is undefined when every J_e vanishes")
        w = [j / z for j in couplings.J_e]
        bg = (0, 1) if kind == "phi_J" else (1, 0)
    st = _superposition(spec, _pair_configs(spec, bg, w), excitations)
    return NamedState(kind, st)


def random_fock_state(spec, rng, excitations=None):
    """Uniformly random configuration of the given sector (``rng``: numpy Generator)."""
    sector = enumerate_sector(spec, spec.M if excitations is None else excitations)
    amps = np.zeros(sector.dim)
    amps[rng.integers(sector.dim)] = 1.0
    return StateVector(sector, amps)
