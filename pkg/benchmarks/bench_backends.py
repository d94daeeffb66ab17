"""Compare the numba and numpy kernel backends.

Times each hot kernel and a full estimator step for a few graph sizes and
prints one row per (kernel, n).  Usage::

    python benchmarks/bench_backends.py [--sizes 25,50,100] [--min-time 0.1]
"""
import argparse
import time

import numpy as np

from adacgp import _kernels
from adacgp.cgp import generate_filter_coeffs, simulate_cgp
from adacgp.core import AdaCGP, EstimatorConfig
from adacgp.graphs import generate_gso


def per_call(fn, min_time):
    fn()  # warm-up / JIT
    loops = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(loops):
            fn()
        dt = time.perf_counter() - t0
        if dt >= min_time:
            return dt / loops
        loops *= 2


def kernel_cases(k, n, P, rng):
    M = rng.standard_normal((n * P, n * P))
    a = rng.standard_normal(n * P)
    pos, neg = np.abs(rng.standard_normal((n, n * P))), np.abs(rng.standard_normal((n, n * P)))
    grad = rng.standard_normal((n, n * P))
    shrink, step = np.full(n * P, 0.01), np.full(n * P, 1e-3)
    blocks = rng.standard_normal((P, n, n))
    W = rng.standard_normal((n, n)) / n
    hist = rng.standard_normal((P, n))
    C = rng.standard_normal((n, n * P))
    return {
        "rank1_update": lambda: k.rank1_update(M, 0.99, a, a),
        "split_project": lambda: k.split_project(pos.copy(), neg.copy(), grad, shrink, step),
        "psi_commutator_grad": lambda: k.psi_commutator_grad(blocks),
        "w_commutator_grad": lambda: k.w_commutator_grad(W, blocks),
        "build_y": lambda: k.build_y(W, hist),
        "group_soft_threshold": lambda: k.group_soft_threshold(C.copy(), P, 0.1),
    }


def estimator_case(backend, n, P):
    W = generate_gso("random", n, 0)
    x = simulate_cgp(W, generate_filter_coeffs(P, 1), 200, burn_in=50, seed=2).samples
    est = AdaCGP(n, EstimatorConfig(P=P, backend=backend, gamma=1.0, path="p2"))
    it = iter(np.resize(x, (10 ** 6, n)))
    return lambda: est.step(next(it))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", default="25,50,100")
    p.add_argument("--P", type=int, default=3)
    p.add_argument("--min-time", type=float, default=0.1)
    args = p.parse_args(argv)
    names = [b for b in ("numba", "numpy") if b in _kernels.BACKENDS]
    if "numba" not in names:
        print("numba unavailable; timing the numpy backend only")
    print(f"{'kernel':<22}{'n':>5}" + "".join(f"{b + ' [us]':>14}" for b in names) + f"{'speed-up':>10}")
    for n in (int(s) for s in args.sizes.split(",")):
        rng = np.random.default_rng(n)
        times = {}
        for b in names:
            cases = kernel_cases(_kernels.BACKENDS[b], n, args.P, rng)
            cases["estimator step"] = estimator_case(b, n, args.P)
            times[b] = {name: per_call(fn, args.min_time) for name, fn in cases.items()}
        for name in times[names[0]]:
            row = [times[b][name] * 1e6 for b in names]
            ratio = f"{row[1] / row[0]:>10.2f}" if len(row) == 2 else ""
            print(f"{name:<22}{n:>5}" + "".join(f"{v:>14.1f}" for v in row) + ratio)


if __name__ == "__main__":
    main()
