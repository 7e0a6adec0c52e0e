"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from netipomdp import kernels
from netipomdp.domains.tiger import build_tiger_model
from netipomdp.solver import NetAgent


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def cases(rng):
    P, A, O, N = 20000, 3, 4, 20000
    r = rng.normal(size=(P, A))
    p = rng.random((P, A, O))
    p /= p.sum(-1, keepdims=True)
    s = rng.integers(-1, N, (P, A, O))
    v = rng.normal(size=N)
    yield "bellman_sweep 20k nodes", lambda: kernels.bellman_sweep(r, p, s, v, 0.9)

    S, K, Aj, Oi = 4, 40, 3, 3
    b = rng.random((S, K))
    b /= b.sum()
    w = rng.random((K, Aj))
    T = rng.random((S, Aj, S))
    Ob = rng.random((S, Aj, Oi))
    G = rng.random((K, Aj, S, K))
    yield "interactive_masses |S|=4 K=40", lambda: [kernels.interactive_masses(b, w, T, Ob, G) for _ in range(200)]

    pts = rng.random((5000, 24))
    x = rng.random(24)
    yield "nearest_tv 5000 x 24", lambda: [kernels.nearest_tv(pts, x) for _ in range(50)]

    def tiger():
        scenario, cfg = build_tiger_model()
        NetAgent(0, scenario.agents[0], cfg)

    yield "tiger agent closure", tiger


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not kernels.compiled_available():
        print("compiled kernels not built; only the numpy fallback is available")
    print(f"{'case':34s} {'compiled':>10s} {'python':>10s} {'speedup':>8s}")
    for name, fn in cases(np.random.default_rng(0)):
        row = {}
        for backend in ("compiled", "python"):
            if backend == "compiled" and not kernels.compiled_available():
                row[backend] = float("nan")
                continue
            kernels.use_backend(backend)
            row[backend] = _time(fn, args.repeat)
        kernels.use_backend("compiled" if kernels.compiled_available() else "python")
        print(f"{name:34s} {row['compiled']*1e3:9.2f}ms {row['python']*1e3:9.2f}ms "
              f"{row['python'] / row['compiled']:7.1f}x")


if __name__ == "__main__":
    main()
