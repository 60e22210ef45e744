"""Time the compiled kernels against the NumPy fallback on assembly-sized inputs.

    python benchmarks/bench_kernels.py [--divisions 32] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from ellipticlab import kernels
from ellipticlab.assembly import _pattern, assemble_form, element_matrices
from ellipticlab.coeffs import pattern
from ellipticlab.mesh import ball_nodes, build_box_mesh


def cases(n):
    mesh = build_box_mesh((0, 0, 0), (1, 1, 1), (n, n, n))
    cs = pattern("checkerboard", mesh, k=1.0)
    A = assemble_form(mesh, cs, "neumann")
    x = np.random.default_rng(0).normal(size=A.n) + 0j
    real, imag = element_matrices(mesh, cs)
    pat = _pattern(mesh)
    vals = np.ascontiguousarray((real + 1j * imag).ravel()[pat.perm])
    region = ball_nodes(mesh, (0.5, 0.5, 0.5), 0.125)
    pts = np.ascontiguousarray(mesh.points[region])
    u = np.ascontiguousarray(x[region])
    return {
        "csr_matvec": lambda impl: impl.csr_matvec(A.indptr, A.indices, A.data, x),
        "segment_sum": lambda impl: impl.segment_sum(vals, pat.starts),
        "holder_max": lambda impl: impl.holder_max(pts, u, 0.5, mesh.h),
    }, f"{n}^3 mesh: {A.n} unknowns, {A.nnz} nonzeros, {region.size} ball nodes"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--divisions", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    work, label = cases(args.divisions)
    print(label)
    if kernels.compiled is None:
        print("compiled extension not built; timing the fallback only")
    impls = [("python", kernels.fallback)] + ([("cython", kernels.compiled)] if kernels.compiled else [])
    print(f"{'kernel':<12}" + "".join(f"{name:>12}" for name, _ in impls) + ("     speedup" if len(impls) == 2 else ""))
    for name, fn in work.items():
        times = []
        for _, impl in impls:
            fn(impl)  # warm up
            times.append(min(timeit.repeat(lambda: fn(impl), number=1, repeat=args.repeat)))
        line = f"{name:<12}" + "".join(f"{t * 1e3:10.2f}ms" for t in times)
        if len(times) == 2:
            line += f"{times[0] / times[1]:11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
