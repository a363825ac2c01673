"""Pure-numpy path kernels, the fallback when the compiled extension is absent.

Same contract as asianvol._ckernels: the log-Euler recursion
S_{i+1} = S_i * exp(sig_i*dW_i - sig_i^2*dt/2) and endpoint-inclusive
(m+1)-node averages.  The vectorised pipeline reorders floating-point
reductions relative to the C loop, so the two backends agree to ~1e-14
relative, not bit-for-bit.
"""

from __future__ import annotations

import numpy as np


def path_stats(sig: np.ndarray, dw: np.ndarray, s0: float, dt: float):
    """Per-path (arithmetic mean, geometric mean, terminal value)."""
    if sig.shape != dw.shape:
        raise ValueError("sig and dw shapes differ")
    m = sig.shape[1]
    x = sig * dw
    x -= 0.5 * dt * np.square(sig)
    lp = np.cumsum(x, axis=1)  # log(S_i / s0) at nodes 1..m
    s = s0 * np.exp(lp)
    arith = (s0 + s.sum(axis=1)) / (m + 1)
    geom = s0 * np.exp(lp.sum(axis=1) / (m + 1))
    return arith, geom, s[:, -1]


def path_stats_const(sigma: float, dw: np.ndarray, s0: float, dt: float):
    """path_stats for a constant volatility level."""
    m = dw.shape[1]
    x = sigma * dw
    x -= 0.5 * dt * sigma * sigma
    lp = np.cumsum(x, axis=1)
    s = s0 * np.exp(lp)
    arith = (s0 + s.sum(axis=1)) / (m + 1)
    geom = s0 * np.exp(lp.sum(axis=1) / (m + 1))
    return arith, geom, s[:, -1]


def path_stats_localvol(sigma_fn, dw: np.ndarray, s0: float, dt: float):
    """path_stats with state-dependent volatility sig_i = sigma_fn(S_i).

    The volatility callback forces a step-by-step sweep; it is vectorised
    across paths, so the Python-level loop is only over the m steps.
    """
    n, m = dw.shape
    lp = np.zeros(n)
    s = np.full(n, float(s0))
    sum_s = np.zeros(n)
    sum_lp = np.zeros(n)
    for i in range(m):
        v = np.asarray(sigma_fn(s), dtype=float)
        lp = lp + (v * dw[:, i] - 0.5 * v * v * dt)
        s = s0 * np.exp(lp)
        sum_s += s
        sum_lp += lp
    arith = (s0 + sum_s) / (m + 1)
    geom = s0 * np.exp(sum_lp / (m + 1))
    return arith, geom, s
