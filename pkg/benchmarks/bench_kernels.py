"""Time the compiled kernels against the numpy fallbacks.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--quick]
"""

import argparse
import timeit

import numpy as np

from dagc import kernels
from dagc.data import SynthConfig, make_synthetic
from dagc.graph import normalize_adjacency, similarity_matrix


def _cases(quick: bool):
    rng = np.random.default_rng(0)
    n = 1000 if quick else 3000
    op = normalize_adjacency(make_synthetic(SynthConfig(n=n, k=4, p_in=0.02, p_out=0.001, dim=8)).graph)
    dense = {w: rng.standard_normal((n, w)) for w in (10, 500)}
    feats = rng.standard_normal((2000 if not quick else 500, 50))
    sim = similarity_matrix(feats)
    costs = {m: rng.random((m, m)) for m in ((10, 50) if quick else (10, 100, 300))}

    cases = []
    for w, z in dense.items():
        args = (op.row_offsets, op.col_indices, op.values, z)
        cases.append((f"spmm n={n} nnz={op.nnz} d={w}", "csr_spmm", args))
    cases.append((f"topk {sim.shape[0]}x{sim.shape[1]} k=3", "topk_rows", (sim, 3, 0)))
    for m, c in costs.items():
        cases.append((f"hungarian {m}x{m}", "hungarian", (c,)))
    return cases


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="smaller inputs")
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; timing the numpy fallback only")
    print(f"{'case':40s}" + "".join(f"{b:>14s}" for b in backends) + ("    speedup" if len(backends) > 1 else ""))
    for label, fn, fargs in _cases(args.quick):
        times = []
        for b in backends:
            f = getattr(kernels.get_impl(b), fn)
            f(*fargs)  # warm up
            times.append(min(timeit.repeat(lambda: f(*fargs), number=1, repeat=args.repeat)))
        row = f"{label:40s}" + "".join(f"{1e3 * t:12.3f}ms" for t in times)
        if len(times) > 1:
            row += f"{times[1] / times[0]:10.1f}x"
        print(row)


if __name__ == "__main__":
    main()
