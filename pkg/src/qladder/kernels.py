"""Hot loops: sector enumeration, local-term assembly, CSR matvec.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy
version. Which one the public wrappers call is decided once at import
time. Set ``QLADDER_NUMBA=0`` in the environment to force the numpy path
(numba missing also falls back silently).
"""

import os

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


USE_NUMBA = _HAVE_NUMBA and os.environ.get("QLADDER_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


def backend():
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# sector enumeration
# ---------------------------------------------------------------------------


@njit(cache=True)
def _enumerate_nb(n_digits, base, weights, total):
    n = base**n_digits
    keep = np.zeros(n, dtype=np.bool_)
    count = 0
    for code in range(n):
        c = code
        s = 0
        for _ in range(n_digits):
            s += weights[c % base]
            c //= base
        if total < 0 or s == total:
            keep[code] = True
            count += 1
    out = np.empty(count, dtype=np.int64)
    j = 0
    for code in range(n):
        if keep[code]:
            out[j] = code
            j += 1
    return out


def _enumerate_np(n_digits, base, weights, total):
    codes = np.arange(base**n_digits, dtype=np.int64)
    if total < 0:
        return codes
    s = np.zeros_like(codes)
    c = codes.copy()
    for _ in range(n_digits):
        s += weights[c % base]
        c //= base
    return codes[s == total]


def enumerate_codes(n_digits, base, weights=None, total=None):
    """All codes of ``n_digits`` base-``base`` digits whose weighted digit sum is ``total``.

    ``weights[d]`` is the weight of digit value ``d`` (defaults to ``d``).
    ``total=None`` returns every code. Output is sorted ascending.
    """
    if weights is None:
        weights = np.arange(base, dtype=np.int64)
    weights = np.ascontiguousarray(weights, dtype=np.int64)
    t = -1 if total is None else int(total)
    if USE_NUMBA:
        return _enumerate_nb(int(n_digits), int(base), weights, t)
    return _enumerate_np(int(n_digits), int(base), weights, t)


# ---------------------------------------------------------------------------
# local-term assembly
# ---------------------------------------------------------------------------
#
# A term acts on one or two sites. Its transitions are grouped by the local
# input index (digit_a + base * digit_b); ``grp[t, i]:grp[t, i+1]`` slices
# the flat ``tout``/``tval`` arrays for term ``t`` and input index ``i``.


@njit(cache=True)
def _search(codes, x):
    lo = 0
    hi = codes.size
    while lo < hi:
        mid = (lo + hi) >> 1
        if codes[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    if lo < codes.size and codes[lo] == x:
        return lo
    return -1


@njit(cache=True)
def _local_index(code, base, pa, pb, sa, sb):
    da = (code // pa) % base
    if sb < 0:
        return da, da, 0
    db = (code // pb) % base
    return da + base * db, da, db


@njit(cache=True)
def _assemble_nb(codes, base, sites, powers, grp, tout, tval):
    n = codes.size
    nterms = sites.shape[0]
    total = 0
    for i in range(n):
        code = codes[i]
        for t in range(nterms):
            sa = sites[t, 0]
            sb = sites[t, 1]
            pb = powers[sb] if sb >= 0 else 0
            loc, da, db = _local_index(code, base, powers[sa], pb, sa, sb)
            total += grp[t, loc + 1] - grp[t, loc]
    rows = np.empty(total, dtype=np.int64)
    cols = np.empty(total, dtype=np.int64)
    vals = np.empty(total, dtype=tval.dtype)
    k = 0
    missing = 0
    for i in range(n):
        code = codes[i]
        for t in range(nterms):
            sa = sites[t, 0]
            sb = sites[t, 1]
            pa = powers[sa]
            pb = powers[sb] if sb >= 0 else 0
            loc, da, db = _local_index(code, base, pa, pb, sa, sb)
            for j in range(grp[t, loc], grp[t, loc + 1]):
                o = tout[j]
                if o == loc:
                    rows[k] = i
                    cols[k] = i
                    vals[k] = tval[j]
                    k += 1
                    continue
                if sb < 0:
                    new = code + (o - da) * pa
                else:
                    new = code + (o % base - da) * pa + (o // base - db) * pb
                r = _search(codes, new)
                if r < 0:
                    missing += 1
                    continue
                rows[k] = r
                cols[k] = i
                vals[k] = tval[j]
                k += 1
    return rows[:k], cols[:k], vals[:k], missing


def _assemble_np(codes, base, sites, powers, grp, tout, tval):
    rows, cols, vals, keys = [], [], [], []
    missing = 0
    idx = np.arange(codes.size, dtype=np.int64)
    for t in range(sites.shape[0]):
        sa, sb = int(sites[t, 0]), int(sites[t, 1])
        pa = int(powers[sa])
        da = (codes // pa) % base
        if sb < 0:
            pb = 0
            db = np.zeros_like(da)
            loc = da
        else:
            pb = int(powers[sb])
            db = (codes // pb) % base
            loc = da + base * db
        for li in range(grp.shape[1] - 1):
            lo, hi = grp[t, li], grp[t, li + 1]
            if lo == hi:
                continue
            sel = idx[loc == li]
            if sel.size == 0:
                continue
            c = codes[sel]
            for j in range(lo, hi):
                o = int(tout[j])
                if o == li:
                    rows.append(sel)
                    cols.append(sel)
                    vals.append(np.full(sel.size, tval[j]))
                    keys.append(np.full(sel.size, j))
                    continue
                if sb < 0:
                    new = c + (o - da[sel]) * pa
                else:
                    new = c + (o % base - da[sel]) * pa + (o // base - db[sel]) * pb
                r = np.searchsorted(codes, new)
                r_clip = np.minimum(r, codes.size - 1)
                ok = codes[r_clip] == new
                missing += int(np.count_nonzero(~ok))
                rows.append(r_clip[ok])
                cols.append(sel[ok])
                vals.append(np.full(int(ok.sum()), tval[j]))
                keys.append(np.full(int(ok.sum()), j))
    if not rows:
        e = np.empty(0, dtype=np.int64)
        return e, e.copy(), np.empty(0, dtype=tval.dtype), 0
    # same triplet order as the numba kernel (input state, then term, then
    # transition) so that duplicate sums round identically
    rows, cols, vals, keys = (np.concatenate(a) for a in (rows, cols, vals, keys))
    order = np.lexsort((keys, cols))
    return rows[order], cols[order], vals[order].astype(tval.dtype), missing


def pack_terms(terms, base):
    """Flatten ``[(sites, matrix), ...]`` into the arrays the assembly kernels take.

    ``sites`` is a 1- or 2-tuple; ``matrix[out, in]`` uses the local index
    ``digit(sites[0]) + base * digit(sites[1])``.
    """
    nt = len(terms)
    L = base * base
    sites = np.full((nt, 2), -1, dtype=np.int64)
    grp = np.zeros((nt, L + 1), dtype=np.int64)
    outs, vals = [], []
    dtype = np.result_type(np.float64, *[np.asarray(m).dtype for _, m in terms]) if terms else np.float64
    pos = 0
    for t, (st, mat) in enumerate(terms):
        mat = np.asarray(mat)
        sites[t, : len(st)] = st
        for li in range(L):
            grp[t, li] = pos
            if li < mat.shape[1]:
                nz = np.nonzero(mat[:, li])[0]
                outs.extend(int(o) for o in nz)
                vals.extend(mat[nz, li])
                pos += nz.size
        grp[t, L] = pos
    return sites, grp, np.asarray(outs, dtype=np.int64), np.asarray(vals, dtype=dtype)


def assemble(codes, base, n_sites, terms):
    """COO triplets (rows, cols, vals) of a sum of local terms over a sorted code list.

    Returns ``(rows, cols, vals, missing)`` where ``missing`` counts
    transitions that leave the basis (nonzero means the basis is not closed).
    """
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    powers = np.asarray([base**i for i in range(n_sites)], dtype=np.int64)
    sites, grp, tout, tval = pack_terms(terms, base)
    if USE_NUMBA:
        return _assemble_nb(codes, int(base), sites, powers, grp, tout, tval)
    return _assemble_np(codes, int(base), sites, powers, grp, tout, tval)


# ---------------------------------------------------------------------------
# dimer -> fock expansion
# ---------------------------------------------------------------------------
#
# Rung digit conventions (both base 4, rung k carries weight 4**k):
#   fock rung index = u + 2 d           (u, d in {0, 1})
#   dimer symbol    = H 0, D 1, T 2, S 3
# T = (|u=1,d=0> + |u=0,d=1>)/sqrt2 = (idx1 + idx2)/sqrt2
# S = (|u=0,d=1> - |u=1,d=0>)/sqrt2 = (idx2 - idx1)/sqrt2

_R2 = 1.0 / np.sqrt(2.0)


@njit(cache=True)
def _dimer_expand_nb(dcodes, n_rungs):
    n = dcodes.size
    total = 0
    for i in range(n):
        c = dcodes[i]
        m = 0
        for _ in range(n_rungs):
            if c % 4 >= 2:
                m += 1
            c //= 4
        total += 1 << m
    col = np.empty(total, dtype=np.int64)
    fock = np.empty(total, dtype=np.int64)
    amp = np.empty(total, dtype=np.float64)
    k = 0
    r2 = 1.0 / np.sqrt(2.0)
    for i in range(n):
        c = dcodes[i]
        start = k
        col[k] = i
        fock[k] = 0
        amp[k] = 1.0
        k += 1
        p = 1
        for _ in range(n_rungs):
            sym = c % 4
            c //= 4
            end = k
            if sym == 0:
                pass
            elif sym == 1:
                for j in range(start, end):
                    fock[j] += 3 * p
            else:
                sgn = 1.0 if sym == 2 else -1.0
                for j in range(start, end):
                    col[k] = i
                    fock[k] = fock[j] + 2 * p
                    amp[k] = amp[j] * r2
                    fock[j] += 1 * p
                    amp[j] *= sgn * r2
                    k += 1
            p *= 4
    return col, fock, amp


def _dimer_expand_np(dcodes, n_rungs):
    col = np.arange(dcodes.size, dtype=np.int64)
    fock = np.zeros(dcodes.size, dtype=np.int64)
    amp = np.ones(dcodes.size)
    rest = dcodes.copy()
    p = 1
    for _ in range(n_rungs):
        sym = rest % 4
        rest //= 4
        fock = fock + np.where(sym == 1, 3 * p, 0)
        split = sym >= 2
        sgn = np.where(sym == 2, 1.0, -1.0)[split]
        # branch idx1 keeps sign, branch idx2 positive
        col = np.concatenate([col[~split], col[split], col[split]])
        fock_s = fock[split]
        amp_s = amp[split]
        fock = np.concatenate([fock[~split], fock_s + p, fock_s + 2 * p])
        amp = np.concatenate([amp[~split], amp_s * sgn * _R2, amp_s * _R2])
        rest = np.concatenate([rest[~split], rest[split], rest[split]])
        p *= 4
    return col, fock, amp


def dimer_expand(dcodes, n_rungs):
    """Expand dimer-basis codes into (column, fock code, amplitude) triplets."""
    dcodes = np.ascontiguousarray(dcodes, dtype=np.int64)
    if USE_NUMBA:
        return _dimer_expand_nb(dcodes, int(n_rungs))
    return _dimer_expand_np(dcodes, int(n_rungs))


# ---------------------------------------------------------------------------
# CSR matvec
# ---------------------------------------------------------------------------


@njit(cache=True)
def _csr_matvec_nb(indptr, indices, data, x, y):
    n = indptr.size - 1
    for i in range(n):
        acc = y[i]
        for j in range(indptr[i], indptr[i + 1]):
            acc += data[j] * x[indices[j]]
        y[i] = acc
    return y


def csr_matvec(mat, x):
    """y = mat @ x for a scipy CSR matrix, through the numba kernel when enabled."""
    if USE_NUMBA:
        x = np.ascontiguousarray(x)
        y = np.zeros(mat.shape[0], dtype=np.result_type(mat.dtype, x.dtype))
        return _csr_matvec_nb(mat.indptr, mat.indices, mat.data, x, y)
    return mat @ x
