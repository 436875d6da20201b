"""Exponential integral E1.

Power series below 1, modified-Lentz continued fraction from 1 upwards.
Absolute accuracy is better than 1e-12 over the whole positive axis.
"""

from __future__ import annotations

import numpy as np

EULER_GAMMA = 0.57721566490153286061
_TINY = 1e-300
_SERIES_TERMS = 40
_CF_MAX_ITER = 500
_CF_TOL = 1e-15


def _series(x: np.ndarray) -> np.ndarray:
    # E1(x) = -gamma - ln x - sum_{k>=1} (-x)^k / (k k!)
    term = np.ones_like(x)
    acc = np.zeros_like(x)
    for k in range(1, _SERIES_TERMS + 1):
        term = term * (-x) / k
        acc += term / k
        if np.all(np.abs(term) < 1e-18):
            break
    return -EULER_GAMMA - np.log(x) - acc


def _scaled_cf(x: np.ndarray) -> np.ndarray:
    """exp(x) * E1(x) by continued fraction, valid for x >= 1."""
    b = x + 1.0
    c = np.full_like(x, 1.0 / _TINY)
    d = 1.0 / b
    h = d.copy()
    out = np.empty_like(x)
    idx = np.arange(x.size)
    for i in range(1, _CF_MAX_ITER + 1):
        an = -float(i * i)
        b = b + 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h = h * delta
        done = np.abs(delta - 1.0) < _CF_TOL
        if done.any():
            out[idx[done]] = h[done]
            keep = ~done
            idx, b, c, d, h = idx[keep], b[keep], c[keep], d[keep], h[keep]
            if not idx.size:
                break
    out[idx] = h
    return out


def _as_positive(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr <= 0.0):
        raise ValueError("E1 is defined for x > 0 only")
    return arr, arr.ndim == 0


def exp1(x):
    """E1(x) = int_x^inf exp(-u)/u du for x > 0 (scalar or array)."""
    arr, scalar = _as_positive(x)
    arr = np.atleast_1d(arr)
    out = np.zeros_like(arr)
    small = arr < 1.0
    if small.any():
        out[small] = _series(arr[small])
    large = ~small & np.isfinite(arr)
    if large.any():
        xl = arr[large]
        out[large] = _scaled_cf(xl) * np.exp(-xl)
    return float(out[0]) if scalar else out


def exp1_scaled(x):
    """exp(x) * E1(x); avoids underflow for large x."""
    arr, scalar = _as_positive(x)
    arr = np.atleast_1d(arr)
    out = np.zeros_like(arr)
    small = arr < 1.0
    if small.any():
        xs = arr[small]
        out[small] = _series(xs) * np.exp(xs)
    large = ~small & np.isfinite(arr)
    if large.any():
        out[large] = _scaled_cf(arr[large])
    return float(out[0]) if scalar else out
