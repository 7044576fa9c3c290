"""Time the compiled and pure-Python kernels on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat 3]
"""
import argparse
import time

import numpy as np

from avqslab import kernels, schur
from avqslab.avqs import all_permutations, random_monotone_table


def _time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    names = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    if len(names) == 1:
        print("compiled extension not built; timing the Python kernels only")

    cases = []
    for d, res in ((2, 1e-3), (3, 1e-2), (3, 1e-3)):
        cases.append((f"divergence scan d={d} res={res:g}",
                      lambda b, d=d, res=res: schur.appendix_grid_check(0.3, d, res, backend=b).violations))
    rng = np.random.default_rng(0)
    for n, l in ((3, 5), (2, 8)):
        f = random_monotone_table(n, l, rng)
        perms = all_permutations(l)
        flat = np.ascontiguousarray(f.table.reshape(-1))
        cases.append((f"orbit mean |S|={n} l={l}",
                      lambda b, flat=flat, n=n, l=l, perms=perms:
                      kernels.backend(b).orbit_mean(flat, n, l, perms)))

    print(f"{'case':34s}" + "".join(f"{n:>12s}" for n in names) + "   speedup")
    for label, fn in cases:
        times, outs = [], []
        for name in names:
            t, out = _time(lambda: fn(name), args.repeat)
            times.append(t)
            outs.append(out)
        agree = all(np.allclose(outs[0], o, atol=1e-12) for o in outs[1:])
        speed = f"{times[0] / times[-1]:9.1f}x" if len(times) > 1 else ""
        print(f"{label:34s}" + "".join(f"{t:11.3f}s" for t in times) + speed + ("" if agree else "  MISMATCH"))


if __name__ == "__main__":
    main()
