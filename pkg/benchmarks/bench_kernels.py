"""Time the numba and numpy kernels on the Monte-Carlo hot loop.

    python benchmarks/bench_kernels.py [--paths 8192] [--steps 200] [--repeat 5]
"""
import argparse
import time

import numpy as np

from tilq import _kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=8192)
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--dim", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=5)
    a = ap.parse_args()

    n, d, dt = a.steps, a.dim, 1.0 / a.steps
    ids = np.arange(a.paths)
    rng = np.random.default_rng(0)
    coef = dict(a=rng.normal(size=n), f=rng.normal(size=n),
                c=rng.normal(size=(n, d)), g=rng.normal(size=(n, d)))
    x0 = np.ones(a.paths)
    backends = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])
    print(f"{a.paths} paths x {n} steps x {d} noises, best of {a.repeat}")
    results = {}
    for name in backends:
        normals, em = _kernels.kernels(name)
        dW = normals(42, ids, 0, n, d, dt)
        em(x0, coef["a"], coef["f"], coef["c"], coef["g"], dW, dt)  # compile / warm up
        t_rng = best_of(lambda: normals(42, ids, 0, n, d, dt), a.repeat)
        t_em = best_of(lambda: em(x0, coef["a"], coef["f"], coef["c"], coef["g"], dW, dt), a.repeat)
        results[name] = (t_rng, t_em)
        print(f"{name:>6}: normals {1e3 * t_rng:8.2f} ms   euler {1e3 * t_em:8.2f} ms")
    if len(results) == 2:
        r = [results["numpy"][k] / results["numba"][k] for k in range(2)]
        print(f"speedup numba/numpy: normals {r[0]:.1f}x   euler {r[1]:.1f}x")


if __name__ == "__main__":
    main()
