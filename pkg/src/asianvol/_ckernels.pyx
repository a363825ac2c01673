# cython: language_level=3
"""Fused path kernels: vol path + Brownian shocks -> per-path averages.

Walks the log-Euler recursion S_{i+1} = S_i * exp(sig_i*dW_i - sig_i^2*dt/2)
one path at a time, accumulating the endpoint-inclusive arithmetic and
geometric running averages without materialising the asset paths.  Must stay
numerically in lock-step with asianvol._kernels_py (same recursion, same
accumulation order within a path).
"""

from libc.math cimport exp

import numpy as np


def path_stats(double[:, ::1] sig, double[:, ::1] dw, double s0, double dt):
    """Per-path (arithmetic mean, geometric mean, terminal value).

    sig, dw: (n, m) arrays — volatility at the left node and Brownian
    increment for each step.  Averages include both endpoints (m+1 nodes).
    """
    cdef Py_ssize_t n = sig.shape[0]
    cdef Py_ssize_t m = sig.shape[1]
    if dw.shape[0] != n or dw.shape[1] != m:
        raise ValueError("sig and dw shapes differ")

    arith_np = np.empty(n)
    geom_np = np.empty(n)
    last_np = np.empty(n)
    cdef double[::1] arith = arith_np
    cdef double[::1] geom = geom_np
    cdef double[::1] last = last_np

    cdef Py_ssize_t j, i
    cdef double lp, s, sum_s, sum_lp, v
    with nogil:
        for j in range(n):
            lp = 0.0
            sum_s = 0.0
            sum_lp = 0.0
            s = s0
            for i in range(m):
                v = sig[j, i]
                lp = lp + (v * dw[j, i] - 0.5 * v * v * dt)
                s = s0 * exp(lp)
                sum_s = sum_s + s
                sum_lp = sum_lp + lp
            arith[j] = (s0 + sum_s) / (m + 1)
            geom[j] = s0 * exp(sum_lp / (m + 1))
            last[j] = s
    return arith_np, geom_np, last_np


def path_stats_const(double sigma, double[:, ::1] dw, double s0, double dt):
    """path_stats for a constant volatility level (no sig array needed)."""
    cdef Py_ssize_t n = dw.shape[0]
    cdef Py_ssize_t m = dw.shape[1]

    arith_np = np.empty(n)
    geom_np = np.empty(n)
    last_np = np.empty(n)
    cdef double[::1] arith = arith_np
    cdef double[::1] geom = geom_np
    cdef double[::1] last = last_np

    cdef double half_var = 0.5 * sigma * sigma * dt
    cdef Py_ssize_t j, i
    cdef double lp, s, sum_s, sum_lp
    with nogil:
        for j in range(n):
            lp = 0.0
            sum_s = 0.0
            sum_lp = 0.0
            s = s0
            for i in range(m):
                lp = lp + (sigma * dw[j, i] - half_var)
                s = s0 * exp(lp)
                sum_s = sum_s + s
                sum_lp = sum_lp + lp
            arith[j] = (s0 + sum_s) / (m + 1)
            geom[j] = s0 * exp(sum_lp / (m + 1))
            last[j] = s
    return arith_np, geom_np, last_np
