"""Reproducible disorder sampling and the device parameter tables.

Random numbers come from xoshiro256** seeded through SplitMix64, written
out here so that any language can regenerate the same draws:

* ``splitmix64``: ``x += 0x9E3779B97F4A7C15``; ``z = x``;
  ``z = (z ^ z>>30) * 0xBF58476D1CE4E5B9``; ``z = (z ^ z>>27) * 0x94D049BB133111EB``;
  output ``z ^ z>>31`` (all arithmetic mod 2**64).
* stream seed for parameter ``name`` and realization ``r``:
  ``a = splitmix64(seed ^ fnv1a64(name))``, then ``splitmix64(a + r)``.
* the four xoshiro words are the next four SplitMix64 outputs from the stream seed.
* a uniform double is ``(next() >> 11) * 2**-53``; a sample on ``[low, high]``
  is ``low + (high - low) * u``, drawn in site order.

Because every (parameter, realization) pair owns its own stream, realization
``k`` never depends on realizations ``0..k-1``.
"""

import csv
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .hamiltonian import CouplingConfig

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x):
    """One SplitMix64 step: ``(new_state, output)``."""
    x = (x + _GOLDEN) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return x, z ^ (z >> 31)


def fnv1a64(text):
    h = 0xCBF29CE484222325
    for b in text.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & MASK64
    return h


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256:
    """xoshiro256** generator."""

    def __init__(self, seed=None, state=None):
        if state is not None:
            if len(state) != 4 or not any(state):
                raise ValueError("xoshiro256** needs four words, not all zero")
            self.s = [int(w) & MASK64 for w in state]
            return
        x = int(seed) & MASK64
        self.s = []
        for _ in range(4):
            x, out = splitmix64(x)
            self.s.append(out)

    def next(self):
        s0, s1, s2, s3 = self.s
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result

    def uniform(self):
        return (self.next() >> 11) * 2.0**-53


def stream_seed(seed, name, realization):
    _, a = splitmix64((int(seed) ^ fnv1a64(name)) & MASK64)
    _, b = splitmix64((a + int(realization)) & MASK64)
    return b


# ---------------------------------------------------------------------------
# distributions and sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Fixed:
    values: tuple

    def __post_init__(self):
        vals = self.values if isinstance(self.values, (list, tuple)) else (self.values,)
        vals = tuple(float(v) for v in vals)
        if not vals or not all(math.isfinite(v) for v in vals):
            raise ValueError("fixed values must be a non-empty list of finite numbers")
        object.__setattr__(self, "values", vals)

    def draw(self, n, gen=None):
        if len(self.values) == 1:
            return [self.values[0]] * n
        if len(self.values) != n:
            raise ValueError(f"fixed list has {len(self.values)} entries, geometry needs {n}")
        return list(self.values)

    def to_dict(self):
        return {"fixed": list(self.values) if len(self.values) > 1 else self.values[0]}


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def __post_init__(self):
        lo, hi = float(self.low), float(self.high)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError("uniform bounds must be finite")
        if lo > hi:
            raise ValueError(f"uniform bounds need low <= high, got [{lo}, {hi}]")
        object.__setattr__(self, "low", lo)
        object.__setattr__(self, "high", hi)

    def draw(self, n, gen):
        w = self.high - self.low
        return [min(self.low + w * gen.uniform(), self.high) for _ in range(n)]

    def to_dict(self):
        return {"uniform": [self.low, self.high]}


def distribution(desc):
    """Parse ``{"fixed": x | [x...]}``, ``{"uniform": [lo, hi]}`` or a bare number/list."""
    if isinstance(desc, (Fixed, Uniform)):
        return desc
    if isinstance(desc, (int, float, list, tuple)):
        return Fixed(desc)
    if isinstance(desc, dict) and len(desc) == 1:
        (kind, arg), = desc.items()
        if kind == "fixed":
            return Fixed(arg)
        if kind == "uniform":
            if not isinstance(arg, (list, tuple)) or len(arg) != 2:
                raise ValueError("uniform needs [low, high]")
            return Uniform(*arg)
    raise ValueError(f"unrecognized distribution descriptor {desc!r}")


@dataclass(frozen=True)
class DisorderSpec:
    """Per-parameter distributions plus the seed and realization index.

    Recognized parameters: ``J_a`` (scalar), ``J_e`` (M-1 values, top-row
    sign), ``omega`` (M values, default 0) and ``J_x`` (2(M-1) diagonal
    couplings, used by :func:`sample_cross_couplings`).
    """

    params: dict
    seed: int = 0
    realization: int = 0

    def __post_init__(self):
        object.__setattr__(self, "params", {k: distribution(v) for k, v in self.params.items()})
        if not 0 <= int(self.seed) <= MASK64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if int(self.realization) < 0:
            raise ValueError("realization index must be non-negative")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "realization", int(self.realization))

    def at(self, realization):
        return replace(self, realization=realization)

    def draw(self, name, n):
        dist = self.params[name]
        gen = Xoshiro256(stream_seed(self.seed, name, self.realization))
        return dist.draw(n, gen)

    def sub_seeds(self):
        return {k: stream_seed(self.seed, k, self.realization) for k in sorted(self.params)}

    def to_dict(self):
        return {k: v.to_dict() for k, v in sorted(self.params.items())}


def sample_couplings(spec, disorder):
    """Ideal-ladder couplings for the realization stored in ``disorder``."""
    M = spec.M
    for req in ("J_a", "J_e"):
        if req not in disorder.params:
            raise ValueError(f"disorder spec lacks {req}")
    (J_a,) = disorder.draw("J_a", 1)
    J_e = disorder.draw("J_e", M - 1) if M > 1 else []
    omega = disorder.draw("omega", M) if "omega" in disorder.params else [0.0] * M
    return CouplingConfig(J_a, J_e, omega)


def sample_cross_couplings(spec, disorder, name="J_x"):
    return tuple(disorder.draw(name, 2 * (spec.M - 1)))


# ---------------------------------------------------------------------------
# device tables
# ---------------------------------------------------------------------------

QUBIT_COLUMNS = ("qubit", "omega_max_GHz", "omega_idle_GHz", "gate_error_pct", "T1_us", "T2star_us")
PAIR_COLUMNS = ("pair", "J_x_MHz")
INTERACTION_FREQUENCY_GHZ = 4.375


class TableFormatError(ValueError):
    def __init__(self, path, row, column, message):
        self.path, self.row, self.column = str(path), row, column
        where = f"row {row}" + (f", column {column!r}" if column else "")
        super().__init__(f"{path}: {where}: {message}")


@dataclass(frozen=True)
class QubitRecord:
    name: str
    omega_max_GHz: float  # nan where the table has no entry
    omega_idle_GHz: float
    gate_error_pct: float
    T1_us: float
    T2star_us: float


@dataclass(frozen=True, eq=False)
class DeviceTable:
    qubits: tuple = ()
    pairs: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, DeviceTable):
            return NotImplemented
        return _records_equal(self.qubits, other.qubits) and self.pairs == other.pairs

    def merged(self, other):
        meta = {**self.meta, **other.meta}
        meta["source"] = [m["source"] for m in (self.meta, other.meta) if "source" in m]
        return DeviceTable(self.qubits or other.qubits, {**self.pairs, **other.pairs}, meta)

    def cross_couplings(self, M):
        """J_x in the order ``u1-d2, d1-u2, u2-d3, ...`` for an M-rung ladder."""
        names = [n for k in range(1, M) for n in (f"u{k}-d{k + 1}", f"d{k}-u{k + 1}")]
        missing = [n for n in names if n not in self.pairs]
        if missing:
            raise KeyError(f"device table has no J_x for {missing}")
        return tuple(self.pairs[n] for n in names)


def _records_equal(a, b):
    if len(a) != len(b):
        return False
    for x, y in zip(a, b):
        for fx, fy in zip(vars(x).values(), vars(y).values()):
            if fx != fy and not (isinstance(fx, float) and math.isnan(fx) and math.isnan(fy)):
                return False
    return True


def _cell(path, row, col, text, allow_missing):
    text = text.strip()
    if text in ("", "-") and allow_missing:
        return math.nan
    try:
        v = float(text)
    except ValueError:
        raise TableFormatError(path, row, col, f"non-numeric cell {text!r}") from None
    if not math.isfinite(v):
        raise TableFormatError(path, row, col, f"non-finite cell {text!r}")
    return v


def load_device_table(path):
    """Parse one TSV file holding either the per-qubit or the J_x table.

    Lines starting with ``#`` are comments. Row numbers in errors count file
    lines from 1 (the header is row 1).
    """
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [(i, ln) for i, ln in enumerate(fh.read().splitlines(), 1) if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise TableFormatError(path, 0, None, "empty table (no header row)")
    rows = list(csv.reader([ln for _, ln in lines], delimiter="\t"))
    header = [h.strip() for h in rows[0]]
    hrow = lines[0][0]
    if "qubit" in header:
        cols = QUBIT_COLUMNS
    elif "pair" in header:
        cols = PAIR_COLUMNS
    else:
        raise TableFormatError(path, hrow, None, "header names neither a 'qubit' nor a 'pair' column")
    for c in cols:
        if c not in header:
            raise TableFormatError(path, hrow, c, "missing column")
    pos = {c: header.index(c) for c in cols}
    if len(rows) == 1:
        raise TableFormatError(path, hrow, None, "table has a header but no data rows")
    qubits, pairs = [], {}
    for (lineno, _), cells in zip(lines[1:], rows[1:]):
        if len(cells) != len(header):
            raise TableFormatError(path, lineno, None, f"expected {len(header)} cells, found {len(cells)}")
        key = cells[pos[cols[0]]].strip()
        if not key:
            raise TableFormatError(path, lineno, cols[0], "empty name")
        if cols is PAIR_COLUMNS:
            if key in pairs:
                raise TableFormatError(path, lineno, "pair", f"duplicate pair {key!r}")
            pairs[key] = _cell(path, lineno, "J_x_MHz", cells[pos["J_x_MHz"]], False)
        else:
            vals = [_cell(path, lineno, c, cells[pos[c]], c == "omega_max_GHz") for c in cols[1:]]
            qubits.append(QubitRecord(key, *vals))
    meta = {"source": str(path)}
    if qubits:
        meta["T1_us_mean"] = round(math.fsum(q.T1_us for q in qubits) / len(qubits), 1)
        meta["T2star_us_mean"] = round(math.fsum(q.T2star_us for q in qubits) / len(qubits), 2)
        meta["interaction_frequency_GHz"] = INTERACTION_FREQUENCY_GHZ
    return DeviceTable(tuple(qubits), pairs, meta)


def _fmt(v):
    return "" if math.isnan(v) else repr(float(v))


def write_device_table(table, path):
    """Write one TSV file; tables holding both parts must be written separately."""
    if table.qubits and table.pairs:
        raise ValueError("table holds qubit and pair data; write them to separate files")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        if table.pairs:
            w.writerow(PAIR_COLUMNS)
            for name, v in table.pairs.items():
                w.writerow([name, _fmt(v)])
        else:
            w.writerow(QUBIT_COLUMNS)
            for q in table.qubits:
                w.writerow([q.name] + [_fmt(getattr(q, c)) for c in QUBIT_COLUMNS[1:]])


def shipped_device_table():
    """Both tables of the 2x20-qubit device used for the perturbed simulations."""
    root = resources.files("qladder") / "data"
    with resources.as_file(root / "qubits.tsv") as q, resources.as_file(root / "cross_couplings.tsv") as p:
        return load_device_table(q).merged(load_device_table(p))
