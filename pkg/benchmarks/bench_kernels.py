"""Timing comparison of the jit kernels against their numpy fallbacks.

Run as ``python benchmarks/bench_kernels.py``. Both implementations are
imported directly, so the KWASR_BACKEND flag does not matter here; the
first jit call is excluded from timing to skip compilation.
"""

from __future__ import annotations

import time

import numpy as np

from kwasr._kernels import (
    HAS_NUMBA,
    adamw_step_numba,
    adamw_step_numpy,
    levenshtein_ops_numba,
    levenshtein_ops_numpy,
)


def _time(fn, *args, repeats: int = 5) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def bench_levenshtein(rng: np.random.Generator) -> list[tuple[str, float, float]]:
    rows = []
    for n in (64, 256, 1024):
        ref = rng.integers(0, 30, size=n).astype(np.int64)
        hyp = rng.integers(0, 30, size=n).astype(np.int64)
        t_np = _time(levenshtein_ops_numpy, ref, hyp)
        if HAS_NUMBA:
            levenshtein_ops_numba(ref, hyp)  # compile
            t_nb = _time(levenshtein_ops_numba, ref, hyp)
            assert levenshtein_ops_numba(ref, hyp) == levenshtein_ops_numpy(ref, hyp)
        else:
            t_nb = float("nan")
        rows.append((f"levenshtein n={n}", t_np, t_nb))
    return rows


def bench_adamw(rng: np.random.Generator) -> list[tuple[str, float, float]]:
    rows = []
    for n in (10_000, 100_000, 1_000_000):
        def fresh():
            return (rng.normal(size=n), rng.normal(size=n),
                    np.zeros(n), np.zeros(n))

        p, g, m, v = fresh()
        t_np = _time(adamw_step_numpy, p, g, m, v, 1e-3, 0.9, 0.95, 1e-8, 0.1, 0.05)
        if HAS_NUMBA:
            p2, g2, m2, v2 = fresh()
            adamw_step_numba(p2, g2, m2, v2, 1e-3, 0.9, 0.95, 1e-8, 0.1, 0.05)
            t_nb = _time(adamw_step_numba, p2, g2, m2, v2, 1e-3, 0.9, 0.95, 1e-8, 0.1, 0.05)
        else:
            t_nb = float("nan")
        rows.append((f"adamw n={n}", t_np, t_nb))
    return rows


def main() -> None:
    rng = np.random.default_rng(0)
    rows = bench_levenshtein(rng) + bench_adamw(rng)
    width = max(len(r[0]) for r in rows)
    print(f"{'kernel'.ljust(width)}  {'numpy (s)':>12}  {'numba (s)':>12}  {'speedup':>8}")
    for name, t_np, t_nb in rows:
        speed = t_np / t_nb if t_nb == t_nb and t_nb > 0 else float("nan")
        print(f"{name.ljust(width)}  {t_np:12.6f}  {t_nb:12.6f}  {speed:8.2f}")
    if not HAS_NUMBA:
        print("numba unavailable: jit columns are NaN")


if __name__ == "__main__":
    main()
