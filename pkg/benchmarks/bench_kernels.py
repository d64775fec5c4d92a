"""Compare the numba kernels against the pure-numpy fallback.

Each backend runs in its own subprocess because the choice is fixed at
import time. Usage::

    python benchmarks/bench_kernels.py [--M 8] [--repeat 3]
"""

import argparse
import hashlib
import json
import os
import subprocess
import sys
import time


def _timed(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def worker(M, repeat):
    import numpy as np

    from qladder import basis as B
    from qladder import hamiltonian as Hm
    from qladder import kernels
    from qladder.core import LadderSpec

    spec = LadderSpec(M, 2)
    rng = np.random.default_rng(0)
    c = Hm.CouplingConfig(4.0, rng.uniform(4, 4.5, M - 1), rng.uniform(0.5, 1.5, M))
    # warm-up compiles the numba kernels so that timings exclude JIT
    Hm.build_ideal(LadderSpec(3, 2), Hm.CouplingConfig.uniform(3, 1.0, 1.0), B.enumerate_dimer_sector(LadderSpec(3, 2), 3, 1))
    kernels.csr_matvec(Hm.build_ideal(LadderSpec(3, 2), Hm.CouplingConfig.uniform(3, 1.0, 1.0)).matrix, np.ones(20))

    res = {"backend": kernels.backend(), "M": M}
    res["enumerate_s"], codes = _timed(lambda: kernels.enumerate_codes(2 * M, 2, total=M), repeat)
    fock = B.enumerate_sector(spec, M)
    res["build_fock_s"], H = _timed(lambda: Hm.build_ideal(spec, c, fock), repeat)
    q = B.largest_charge_sector(spec)
    dim = B.enumerate_dimer_sector(spec, M, q)
    res["build_dimer_s"], Hd = _timed(lambda: Hm.build_ideal(spec, c, dim), repeat)
    x = rng.normal(size=H.dim)
    res["matvec_x100_s"], y = _timed(lambda: [kernels.csr_matvec(H.matrix, x) for _ in range(100)][-1], repeat)
    res["fock_dim"], res["dimer_dim"], res["nnz"] = fock.dim, dim.dim, int(H.matrix.nnz)
    digest = hashlib.sha256()
    for arr in (codes, H.matrix.toarray() if H.dim <= 4000 else H.matrix.data, Hd.matrix.data, np.round(y, 10)):
        digest.update(np.ascontiguousarray(arr).tobytes())
    res["digest"] = digest.hexdigest()[:16]
    print(json.dumps(res))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--M", type=int, default=8)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        worker(args.M, args.repeat)
        return
    rows = []
    for flag in ("1", "0"):
        env = dict(os.environ, QLADDER_NUMBA=flag)
        cmd = [sys.executable, __file__, "--worker", "--M", str(args.M), "--repeat", str(args.repeat)]
        out = subprocess.run(cmd, env=env, check=True, capture_output=True, text=True).stdout
        rows.append(json.loads(out.strip().splitlines()[-1]))
    keys = ["enumerate_s", "build_fock_s", "build_dimer_s", "matvec_x100_s"]
    nb, npy = rows
    print(f"M={args.M}  fock dim={nb['fock_dim']}  dimer dim={nb['dimer_dim']}  nnz={nb['nnz']}")
    print(f"{'kernel':<16}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for k in keys:
        print(f"{k:<16}{nb[k]:>12.4f}{npy[k]:>12.4f}{npy[k] / max(nb[k], 1e-12):>10.1f}")
    same = nb["digest"] == npy["digest"]
    print(f"identical results: {same}")
    sys.exit(0 if same else 1)


if __name__ == "__main__":
    main()
