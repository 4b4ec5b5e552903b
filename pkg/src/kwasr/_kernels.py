"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

Backend selection happens once at import time. Set ``KWASR_BACKEND=numpy``
to force the fallback (useful for debugging and for the benchmark in
``benchmarks/bench_kernels.py``); ``KWASR_BACKEND=numba`` insists on the
jit path and warns if numba is unavailable. Both backends compute
identical results; tests assert agreement element for element.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

_REQUESTED = os.environ.get("KWASR_BACKEND", "").strip().lower()
if _REQUESTED not in ("", "numba", "numpy"):
    raise ValueError(f"KWASR_BACKEND must be 'numba' or 'numpy', got {_REQUESTED!r}")

HAS_NUMBA = False
if _REQUESTED != "numpy":
    try:
        from numba import njit

        HAS_NUMBA = True
    except ImportError:
        if _REQUESTED == "numba":
            warnings.warn("KWASR_BACKEND=numba but numba is not importable; using numpy")

BACKEND = "numba" if HAS_NUMBA else "numpy"


def _lev_matrix_np(ref: np.ndarray, hyp: np.ndarray) -> np.ndarray:
    """Full edit-distance table, rows vectorized.

    The insertion dependency within a row is resolved with the prefix-min
    identity d[i,j] = min_k<=j (cand[k] + (j - k)).
    """
    n, m = len(ref), len(hyp)
    d = np.empty((n + 1, m + 1), dtype=np.int64)
    d[0] = np.arange(m + 1)
    d[:, 0] = np.arange(n + 1)
    jrange = np.arange(m + 1)
    for i in range(1, n + 1):
        cand = np.empty(m + 1, dtype=np.int64)
        cand[0] = i
        cand[1:] = np.minimum(d[i - 1, :-1] + (hyp != ref[i - 1]), d[i - 1, 1:] + 1)
        d[i] = np.minimum.accumulate(cand - jrange) + jrange
    return d


def _backtrace(d: np.ndarray, ref: np.ndarray, hyp: np.ndarray):
    # Tie-break order on equal cost: match, substitution, deletion, insertion.
    i, j = len(ref), len(hyp)
    ins = dele = sub = 0
    while i > 0 or j > 0:
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and d[i, j] == d[i - 1, j - 1]:
            i -= 1
            j -= 1
        elif i > 0 and j > 0 and d[i, j] == d[i - 1, j - 1] + 1:
            sub += 1
            i -= 1
            j -= 1
        elif i > 0 and d[i, j] == d[i - 1, j] + 1:
            dele += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return ins, dele, sub


def levenshtein_ops_numpy(ref: np.ndarray, hyp: np.ndarray):
    """(insertions, deletions, substitutions) for one aligned pair."""
    d = _lev_matrix_np(ref, hyp)
    return _backtrace(d, ref, hyp)


def _lev_ops_loops(ref, hyp):  # pragma: no cover - compiled when numba is active
    n = len(ref)
    m = len(hyp)
    d = np.empty((n + 1, m + 1), dtype=np.int64)
    for j in range(m + 1):
        d[0, j] = j
    for i in range(1, n + 1):
        d[i, 0] = i
        for j in range(1, m + 1):
            cost = 0 if ref[i - 1] == hyp[j - 1] else 1
            best = d[i - 1, j - 1] + cost
            if d[i - 1, j] + 1 < best:
                best = d[i - 1, j] + 1
            if d[i, j - 1] + 1 < best:
                best = d[i, j - 1] + 1
            d[i, j] = best
    i = n
    j = m
    ins = 0
    dele = 0
    sub = 0
    while i > 0 or j > 0:
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and d[i, j] == d[i - 1, j - 1]:
            i -= 1
            j -= 1
        elif i > 0 and j > 0 and d[i, j] == d[i - 1, j - 1] + 1:
            sub += 1
            i -= 1
            j -= 1
        elif i > 0 and d[i, j] == d[i - 1, j] + 1:
            dele += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return ins, dele, sub


def _adamw_step_loops(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):  # pragma: no cover
    for i in range(p.shape[0]):
        gi = g[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * gi
        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi
        p[i] -= lr * (m[i] / bc1) / (np.sqrt(v[i] / bc2) + eps)


def adamw_step_numpy(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):
    """Moment update and bias-corrected step, in place on flat views."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


if HAS_NUMBA:
    levenshtein_ops_numba = njit(cache=True)(_lev_ops_loops)
    adamw_step_numba = njit(cache=True)(_adamw_step_loops)
    levenshtein_ops = levenshtein_ops_numba
    adamw_step = adamw_step_numba
else:
    levenshtein_ops_numba = None
    adamw_step_numba = None
    levenshtein_ops = levenshtein_ops_numpy
    adamw_step = adamw_step_numpy
