"""Time the hot kernels with the numba and the numpy backend.

    python benchmarks/bench_kernels.py [--repeat 5]

Both implementations are imported directly, so one process compares them
regardless of ANDHAM_DISABLE_NUMBA. The first numba call (compilation, or
loading the cache) is excluded from the timings.
"""

import argparse
import time

import numpy as np

from andham import bessel, greens, operator
from andham._accel import HAS_NUMBA


def best_of(fn, repeat):
    fn()  # warm-up / JIT
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    x = rng.uniform(0.01, 40.0, 200_000)

    u = rng.standard_normal((255, 255, 1))
    diag = rng.standard_normal((255, 255, 1)) + 4 * 128.0**2
    out = np.empty_like(u)

    pts_x = rng.uniform(-1, 1, (20_000, 2))
    pts_y = rng.uniform(-1, 1, (20_000, 2))

    r = rng.uniform(1e-3, 0.25, 2_000)
    nodes, weights = greens._GL_NODES, greens._GL_WEIGHTS

    return {
        "bessel K0 (2e5 points)": (lambda: bessel._k0_loop(x), lambda: bessel._kn_numpy(x, 0)),
        "stencil matvec (255^2)": (
            lambda: operator._stencil_loop(u, diag, 128.0**2, False, out),
            lambda: operator._stencil_numpy(u, diag, 128.0**2, False, out),
        ),
        "reflected kernel (2e4 pairs, d=2)": (
            lambda: greens._reflect_loop(pts_x, pts_y, 1.0, 1.0, 2, 3, True),
            lambda: greens._reflect_numpy(pts_x, pts_y, 1.0, 1.0, 2, 3, True),
        ),
        "d=2 layer integral (2e3 radii)": (
            lambda: greens._bar2_loop(r, 0.25, 1.0, 0.25, 0, nodes, weights, greens._GL_PANELS),
            lambda: greens._bar2_numpy(r, 0.25, 1.0, 0.25, 0, nodes, weights, greens._GL_PANELS),
        ),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not HAS_NUMBA:
        print("numba not installed; only the numpy backend is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':38s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speed-up':>9s}")
    for name, (jit_fn, np_fn) in cases(rng).items():
        tn = best_of(np_fn, args.repeat)
        tj = best_of(jit_fn, args.repeat) if HAS_NUMBA else float("nan")
        print(f"{name:38s} {1e3 * tj:11.2f} {1e3 * tn:11.2f} {tn / tj:9.1f}")


if __name__ == "__main__":
    main()
