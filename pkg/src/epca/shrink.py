"""Soft-thresholding to an entrywise l1 budget.

The threshold is found by bisection and then snapped to the exact value
implied by the active set, so the output is the Euclidean projection onto
the l1 ball of radius ``gamma``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .matcore import as_dense


@dataclass(frozen=True)
class ShrinkResult:
    matrix: np.ndarray
    threshold: float
    attained_l1: float
    bisection_steps: int
    zero_columns: tuple = field(default=())


def soft(Y, t):
    """Entrywise ``sign(Y) * max(|Y| - t, 0)``."""
    return np.sign(Y) * np.maximum(np.abs(Y) - t, 0.0)


def _exact_threshold(a, t, gamma):
    # Given an approximate threshold, solve sum_{a_i > t*} (a_i - t*) = gamma
    # on the active set and accept it only if the active set is unchanged.
    active = a > t
    m = int(active.sum())
    if m == 0:
        return t
    t_star = (a[active].sum() - gamma) / m
    if t_star < 0:
        return t
    if np.all(a[active] > t_star) and np.all(a[~active] <= t_star):
        return float(t_star)
    return t


def soft_threshold(Y, gamma: float, eps: float = 1e-10) -> ShrinkResult:
    """Project ``Y`` onto ``{M : ||M||_1 <= gamma}`` by soft-thresholding.

    If ``||Y||_1 <= gamma + eps * max(1, gamma)`` the constraint is treated as
    inactive and ``Y`` is returned unchanged with ``t = 0``.
    Otherwise the threshold ``t`` is bisected on ``[0, max|Y_ij|]`` until the
    shrunk l1 norm is within ``eps * max(1, gamma)`` of ``gamma``.

    All-zero output columns are allowed and listed in ``zero_columns``.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    Y = as_dense(Y, "Y")
    a = np.abs(Y)
    l1 = float(a.sum())
    if l1 <= gamma + eps * max(1.0, gamma):
        # Inside the tolerance band counts as feasible, which makes the map idempotent.
        return ShrinkResult(Y.copy(), 0.0, l1, 0, _zero_cols(Y))
    t, _, steps = kernels.l1_bisect(a, gamma, eps)
    t = _exact_threshold(a.ravel(), t, gamma)
    out = soft(Y, t)
    return ShrinkResult(out, float(t), float(np.abs(out).sum()), int(steps), _zero_cols(out))


def _zero_cols(M):
    return tuple(int(j) for j in np.flatnonzero(~np.any(M != 0, axis=0)))


def column_deviation(Y, Yhat) -> np.ndarray:
    """Per-column ``sin^2`` of the angle between ``Y[:, j]`` and ``Yhat[:, j]``.

    A zero column in ``Yhat`` counts as orthogonal (``sin^2 = 1``).
    """
    Y = as_dense(Y, "Y")
    Yhat = as_dense(Yhat, "Yhat")
    if Y.shape != Yhat.shape:
        raise ValueError(f"shape mismatch {Y.shape} vs {Yhat.shape}")
    ny = np.linalg.norm(Y, axis=0)
    if np.any(ny == 0):
        raise ValueError("Y has a zero column")
    nh = np.linalg.norm(Yhat, axis=0)
    out = np.ones(Y.shape[1])
    ok = nh > 0
    cos = (Y[:, ok] * Yhat[:, ok]).sum(axis=0) / (ny[ok] * nh[ok])
    out[ok] = np.clip(1.0 - cos**2, 0.0, 1.0)
    return out
