"""Compare the compiled kernels against the numpy fallback.

Run:  python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from resolab import _core_py

try:
    from resolab import _core
except ImportError:
    _core = None


def time_call(fn, *args, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_stencil(n):
    rng = np.random.default_rng(0)
    diag = rng.normal(size=(n, n))
    px = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    py = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    px[:, -1] = 0.0
    py[-1, :] = 0.0
    v = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    y = np.zeros_like(v)
    rows = []
    t_py = time_call(_core_py.chebyshev_step, diag, px, py, v, y, 1.0, 0.0)
    rows.append(("python", t_py))
    if _core is not None:
        t_cy = time_call(_core.chebyshev_step, diag, px, py, v, y, 1.0, 0.0)
        rows.append(("cython", t_cy))
    return rows


def bench_tridiag(n, m):
    rng = np.random.default_rng(1)
    d = rng.normal(size=n) + 5.0
    e = rng.normal(size=n - 1)
    rhs = rng.normal(size=n) + 1j * rng.normal(size=n)
    shifts = (rng.normal(size=m) + 1j * np.abs(rng.normal(size=m)) + 1e-6j)
    rows = []
    t_py = time_call(_core_py.tridiag_solve_many, d, e, shifts, rhs, repeat=3)
    rows.append(("python", t_py))
    if _core is not None:
        t_cy = time_call(_core.tridiag_solve_many, d, e, shifts, rhs, repeat=3)
        rows.append(("cython", t_cy))
    return rows


def main():
    print("chebyshev_step (fused 5-point stencil + recurrence)")
    for n in (128, 256, 512):
        rows = bench_stencil(n)
        base = rows[0][1]
        for name, t in rows:
            speed = base / t
            print(f"  n={n:4d}  {name:7s} {t * 1e3:9.3f} ms   x{speed:5.2f}")
    print("tridiag_solve_many (batched complex-shifted Thomas)")
    for n, m in ((20000, 64), (100000, 64), (100000, 256)):
        rows = bench_tridiag(n, m)
        base = rows[0][1]
        for name, t in rows:
            speed = base / t
            print(f"  n={n:6d} m={m:3d}  {name:7s} {t * 1e3:9.2f} ms   x{speed:5.2f}")


if __name__ == "__main__":
    main()
