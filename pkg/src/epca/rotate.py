"""Orthogonal rotations that concentrate loading mass.

``varimax_rotate`` maximizes the varimax criterion by gradient projection
on the orthogonal group (Jennrich 2001; Bernaards & Jennrich 2005).
``absmin_rotate`` takes projected subgradient steps on ``||YR||_1``; it is
experimental and capped at a fixed number of steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .matcore import as_dense, polar_unchecked

_MAX_HALVINGS = 11


@dataclass(frozen=True)
class RotationResult:
    rotation: np.ndarray
    rotated: np.ndarray
    criterion_trace: list
    iterations: int
    converged: bool
    zero_rows: tuple = field(default=())


def varimax_criterion(A) -> float:
    """Sum over columns of the variance of squared entries.

    ``sum_j [ (1/p) sum_i A_ij^4 - (1/p^2) (sum_i A_ij^2)^2 ]``
    """
    A = as_dense(A, "A")
    p = A.shape[0]
    A2 = A * A
    return float((A2 * A2).sum() / p - (A2.sum(axis=0) ** 2).sum() / p**2)


def quartimax_criterion(A) -> float:
    """``||A||_4^4``."""
    A = as_dense(A, "A")
    return float(((A * A) ** 2).sum())


def _project_tangent(T, G):
    M = T.T @ G
    return G - T @ ((M + M.T) / 2)


def varimax_rotate(Y, kaiser_normalize: bool = False, tol: float = 1e-6,
                   max_iter: int = 1000) -> RotationResult:
    """Find an orthogonal ``R`` locally maximizing ``varimax_criterion(Y @ R)``.

    Parameters
    ----------
    Y : (p, k) array
    kaiser_normalize : bool
        Scale rows to unit length before optimizing. Zero rows stay unscaled
        and are listed in ``zero_rows``. ``rotated`` is always ``Y @ rotation``
        so original row scales are kept. ``criterion_trace`` then tracks the
        criterion of the normalized rows, which is what is maximized.
    tol : float
        Stop when the Frobenius norm of the projected gradient drops below.
    max_iter : int

    Notes
    -----
    Starts at the identity. Each step doubles the previous step size and then
    halves it until an Armijo-type ascent condition holds; if no halving
    yields an increase the iteration stops, so the trace never decreases.
    The internal objective is ``p`` times the criterion, which keeps the
    gradient scale independent of ``p`` for unit-norm columns.
    """
    Y = as_dense(Y, "Y")
    if not tol > 0:
        raise ValueError("tol must be positive")
    p, k = Y.shape
    zero_rows = ()
    A = Y
    if kaiser_normalize:
        h = np.sqrt((Y * Y).sum(axis=1))
        zero_rows = tuple(int(i) for i in np.flatnonzero(h == 0))
        h[h == 0] = 1.0
        A = Y / h[:, None]

    T = np.eye(k)
    if k == 1:
        return RotationResult(T, Y.copy(), [varimax_criterion(Y)], 0, True, zero_rows)

    f, Gq = kernels.varimax_value_grad(A)
    f, G = p * f, p * (A.T @ Gq)
    trace = [f / p]
    step = 1.0
    converged = False
    for _ in range(max_iter):
        Gp = _project_tangent(T, G)
        s = float(np.linalg.norm(Gp))
        if s < tol:
            converged = True
            break
        step *= 2.0
        for _ in range(_MAX_HALVINGS):
            Tt = polar_unchecked(T + step * Gp)
            ft, Gqt = kernels.varimax_value_grad(A @ Tt)
            ft = p * ft
            if ft > f + 0.5 * s * s * step:
                break
            step /= 2.0
        else:
            if not ft > f:
                # Stalled at working precision.
                converged = s < 1e3 * tol
                break
        T, f, G = Tt, ft, p * (A.T @ Gqt)
        trace.append(f / p)
    return RotationResult(T, Y @ T, trace, len(trace) - 1, converged, zero_rows)


def absmin_rotate(Y, iters: int = 15, tol: float = 1e-10) -> RotationResult:
    """Projected subgradient descent on ``||Y R||_1`` over orthogonal ``R``.

    Exactly ``iters`` steps are taken along the normalized tangent projection
    of ``Y^T sign(Y R)``, each retracted to the orthogonal group by the polar
    factor, with step halving while the l1 value does not drop. The best
    iterate is returned; ``criterion_trace`` holds the best-so-far l1 value
    (length ``iters + 1``). Convergence is claimed only when the last step
    changed the best value by less than ``tol``.
    """
    Y = as_dense(Y, "Y")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    k = Y.shape[1]
    T = np.eye(k)
    f = float(np.abs(Y).sum())
    best_f, best_T = f, T
    trace = [best_f]
    step = 0.5
    for _ in range(iters):
        G = Y.T @ np.sign(Y @ T)
        Gp = _project_tangent(T, G)
        s = float(np.linalg.norm(Gp))
        if s > 0:
            D = Gp / s
            step = min(2.0 * step, 1.0)
            for _ in range(_MAX_HALVINGS):
                Tt = polar_unchecked(T - step * D)
                ft = float(np.abs(Y @ Tt).sum())
                if ft < f:
                    break
                step /= 2.0
            T, f = Tt, ft
        if f < best_f:
            best_f, best_T = f, T
        trace.append(best_f)
    converged = abs(trace[-2] - trace[-1]) < tol
    return RotationResult(best_T, Y @ best_T, trace, iters, bool(converged))


def rotate(Y, kind: str = "varimax", kaiser_normalize: bool = False, **kwargs) -> RotationResult:
    """Dispatch on rotation name (``varimax`` or ``absmin``)."""
    if kind == "varimax":
        return varimax_rotate(Y, kaiser_normalize=kaiser_normalize, **kwargs)
    if kind == "absmin":
        return absmin_rotate(Y, **kwargs)
    raise ValueError(f"unknown rotation {kind!r}")
