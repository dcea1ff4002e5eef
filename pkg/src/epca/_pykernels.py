"""Numpy implementations of the hot kernels; used when the extension is absent."""

import numpy as np


def l1_bisect(a, gamma, eps, max_steps):
    a = np.asarray(a, dtype=np.float64)
    lo, hi = 0.0, float(a.max(initial=0.0))
    tol = eps * max(1.0, gamma)
    mid = val = 0.0
    steps = 0
    while steps < max_steps:
        mid = 0.5 * (lo + hi)
        val = float(np.maximum(a - mid, 0.0).sum())
        steps += 1
        if abs(val - gamma) <= tol or mid <= lo or mid >= hi:
            break
        if val > gamma:
            lo = mid
        else:
            hi = mid
    return mid, val, steps


def varimax_value_grad(L):
    L = np.asarray(L, dtype=np.float64)
    p = L.shape[0]
    L2 = L * L
    s2 = L2.sum(axis=0)
    value = float((L2 * L2).sum(axis=0).sum() / p - (s2 * s2).sum() / p**2)
    grad = (4.0 / p) * L * (L2 - s2 / p)
    return value, grad
