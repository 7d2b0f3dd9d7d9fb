"""Benchmark the compiled kernels against the numpy fallback.

Times the three hot kernel families on pipeline-shaped inputs and one
end-to-end extension run per backend. Run from the repository root:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from convext._kernels import _fallback

try:
    from convext._kernels import _native
except ImportError:
    _native = None


def timeit(fn, repeat=30):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def bench_kernels():
    rng = np.random.default_rng(0)
    C, T, X = 101, 9, 351
    A = rng.normal(size=(C, X)) * 20
    lw = rng.normal(size=C)
    M = rng.normal(size=(C, T)) * 5
    D = rng.normal(size=(T, X)) * 20
    # spread typical of the contraction loop: most entries deeply underflow
    A_cold = A - 3000.0 * rng.random(size=(C, X))
    xs = np.linspace(-4, 4, 1401)
    F = rng.normal(size=(32, 1401)) * 3
    xis = np.linspace(-5, 5, 141)
    V = rng.normal(size=(T, X * 20)) * 30

    cases = [
        ("mixture_lse (101x9x351)", lambda m: m.mixture_lse(A, lw, M)),
        ("mixture_lse cold", lambda m: m.mixture_lse(A_cold, lw, M)),
        ("tilted_lse (101x9x351)", lambda m: m.tilted_lse(A, D)),
        ("logsumexp_rows (9x7020)", lambda m: m.logsumexp_rows(V)),
        ("conjugate_lines (32x1401 -> 141)", lambda m: m.conjugate_lines(xs, F, xis)),
    ]
    rows = []
    for name, call in cases:
        tpy = timeit(lambda: call(_fallback))
        tna = timeit(lambda: call(_native)) if _native else float("nan")
        rows.append((name, tpy, tna))
    return rows


def bench_pipeline():
    import os
    from convext.extension import SofteningParams, extend_convex
    from convext.grids import GridFunction, GridSpec, ProductGridFunction

    ts = GridSpec([(-1, 1, 9)])
    xs = GridSpec([(-6, 6, 301)])
    phi = ProductGridFunction.sample(
        ts, xs, lambda p: 0.5 * (p[:, 1] - p[:, 0]) ** 2 + 0.9189385332046727)
    psi = GridFunction.sample(xs, lambda p: np.maximum(0.3 * p[:, 0],
                                                       -0.25 * p[:, 0]) - 0.2)
    params = SofteningParams(100.0, GridSpec([(-0.45, 0.45, 81)]))

    def run():
        rep = extend_convex(psi, phi, params, tol=1e-4, max_iter=800,
                            samples=200, seed=0)
        assert rep.trace.converged
        return rep

    t0 = time.perf_counter()
    run()
    return time.perf_counter() - t0


def main():
    from convext._kernels import BACKEND

    print(f"selected backend: {BACKEND}")
    if _native is None:
        print("native backend not built; kernel table shows fallback only\n")
    rows = bench_kernels()
    w = max(len(r[0]) for r in rows)
    print(f"{'kernel':{w}}  {'python':>10}  {'native':>10}  {'speedup':>8}")
    for name, tpy, tna in rows:
        sp = tpy / tna if tna == tna else float("nan")
        print(f"{name:{w}}  {tpy * 1e3:9.3f}ms  {tna * 1e3:9.3f}ms  {sp:7.2f}x")
    print(f"\nend-to-end extension run ({'native' if _native else 'python'} "
          f"selected): {bench_pipeline():.2f}s")


if __name__ == "__main__":
    main()
