"""SCA, SMA and sparse coding by alternating polar / polar-rotate-shrink updates.

All three approximate ``X ~ Z B Y^T`` with orthonormal-ish ``Z`` (n x k) and
``Y`` (p x k) and a full k x k center ``B = Z^T X Y``. SCA puts an l1
budget on ``Y``; SMA puts budgets on both; sparse coding is SCA on ``X^T``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .matcore import (
    RankDeficientError,
    as_dense,
    as_matrix,
    frobenius_sq,
    polar,
    polar_unchecked,
    truncated_svd,
)
from .rotate import rotate
from .shrink import soft_threshold

ROTATIONS = ("varimax", "absmin")


class GammaRangeWarning(UserWarning):
    """An l1 budget lies outside the range where it is active and feasible."""


@dataclass(frozen=True)
class FitConfig:
    """Settings shared by :func:`sca`, :func:`sma` and :func:`sparse_coding`.

    ``gamma`` is the l1 budget on the loadings (default ``sqrt(p k)``);
    ``gamma_z`` is the budget on ``Z`` for SMA (default ``sqrt(n k)``).
    ``kaiser_normalize=None`` means the method default: off for SCA/SMA,
    on for sparse coding.
    """

    k: int
    gamma: float | None = None
    gamma_z: float | None = None
    tol: float = 1e-5
    max_iter: int = 1000
    rotation: str = "varimax"
    kaiser_normalize: bool | None = None
    seed: int = 0
    absmin_iters: int = 15
    rotation_tol: float = 1e-6

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        for name in ("gamma", "gamma_z"):
            g = getattr(self, name)
            if g is not None and not (math.isfinite(g) and g >= 1):
                raise ValueError(f"{name} must be >= 1, got {g}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.rotation not in ROTATIONS:
            raise ValueError(f"rotation must be one of {ROTATIONS}, got {self.rotation!r}")

    def to_dict(self):
        return asdict(self)


def check_gamma(gamma, k, dim, name="gamma"):
    """Warn when ``gamma`` falls outside ``[k, k sqrt(dim)]``."""
    lo, hi = k, k * math.sqrt(dim)
    if gamma < lo:
        warnings.warn(f"{name}={gamma:g} < k={k}: no orthonormal matrix is feasible",
                      GammaRangeWarning, stacklevel=3)
    elif gamma > hi * (1 + 1e-12):
        warnings.warn(f"{name}={gamma:g} > k*sqrt({dim})={hi:g}: constraint is inactive",
                      GammaRangeWarning, stacklevel=3)


@dataclass
class ScaFit:
    loadings: np.ndarray
    scores_basis: np.ndarray
    center: np.ndarray
    component_ev: np.ndarray
    pve: float
    objective_trace: list
    iterations: int
    converged: bool
    zero_columns: tuple
    config: FitConfig
    diagnostics: dict = field(default_factory=dict)

    @property
    def Y(self):
        return self.loadings

    @property
    def Z(self):
        return self.scores_basis

    @property
    def B(self):
        return self.center

    def reconstruct(self):
        return self.scores_basis @ self.center @ self.loadings.T

    def to_dict(self):
        out = {
            "loadings": self.loadings.tolist(),
            "scores_basis": self.scores_basis.tolist(),
            "center": self.center.tolist(),
            "component_ev": [float(v) for v in self.component_ev],
            "pve": float(self.pve),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "objective_trace": [float(v) for v in self.objective_trace],
            "zero_columns": list(self.zero_columns),
            "config": self.config.to_dict(),
        }
        return out


@dataclass
class SmaFit(ScaFit):
    gamma_z: float = 0.0
    zero_columns_z: tuple = ()

    def to_dict(self):
        out = super().to_dict()
        out["gamma_z"] = float(self.gamma_z)
        out["zero_columns_z"] = list(self.zero_columns_z)
        return out


@dataclass
class SparseCodingFit:
    """Sparse coding of ``X ~ scores @ basis``.

    ``scores`` (n x k) is l1-constrained; ``basis`` is ``B Y^T`` (k x p).
    ``transposed_fit`` is the underlying SCA fit of ``X^T``.
    """

    scores: np.ndarray
    basis: np.ndarray
    transposed_fit: ScaFit

    def to_dict(self):
        out = self.transposed_fit.to_dict()
        out["scores"] = self.scores.tolist()
        out["basis"] = self.basis.tolist()
        return out


# --------------------------------------------------------------------------
# Metrics and centers


def component_ev(X, y) -> float:
    """Explained variance ``||X y||^2`` of one loading vector."""
    y = np.asarray(y, dtype=np.float64).ravel()
    Xy = X @ y
    return float(np.dot(Xy, Xy))


def _range_basis(Y):
    U, s, _ = np.linalg.svd(Y, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return U[:, :0], True
    r = int((s > max(Y.shape) * np.finfo(float).eps * s[0]).sum())
    return U[:, :r], r < Y.shape[1]


def pve(X, Y) -> float:
    """``||X Y (Y^T Y)^+ Y^T||_F^2 / ||X||_F^2``.

    The projector is built from an orthonormal basis of ``range(Y)``, which
    equals the pseudo-inverse form when ``Y`` is rank-deficient.
    """
    X = as_matrix(X)
    total = frobenius_sq(X)
    if total == 0:
        raise ValueError("pve undefined for a zero matrix")
    Y = as_dense(Y, "Y")
    if Y.shape[0] != X.shape[1]:
        raise ValueError(f"Y has {Y.shape[0]} rows, X has {X.shape[1]} columns")
    Q, _ = _range_basis(Y)
    XQ = np.asarray(X @ Q)
    return float(min(1.0, max(0.0, (XQ * XQ).sum() / total)))


def optimal_center(X, Z, Y) -> np.ndarray:
    """Least-squares center ``(Z^T Z)^+ Z^T X Y (Y^T Y)^+``."""
    Z = as_dense(Z, "Z")
    Y = as_dense(Y, "Y")
    ZtXY = Z.T @ np.asarray(X @ Y)
    return np.linalg.pinv(Z.T @ Z) @ ZtXY @ np.linalg.pinv(Y.T @ Y)


def diagonal_center(X, Z, Y, gram_tol: float = 1e-6) -> np.ndarray:
    """Best diagonal center ``diag(Z^T X Y)`` for orthonormal ``Z`` and ``Y``."""
    Z = as_dense(Z, "Z")
    Y = as_dense(Y, "Y")
    k = Z.shape[1]
    for name, M in (("Z", Z), ("Y", Y)):
        if np.abs(M.T @ M - np.eye(k)).max() > gram_tol:
            raise ValueError(f"{name} does not have orthonormal columns")
    return np.diag(Z.T @ np.asarray(X @ Y)).copy()


def least_squares_diagonal(X, Z, Y) -> np.ndarray:
    """Best diagonal center for arbitrary ``Z`` and ``Y``.

    Solves ``G d = r`` with ``G_ij = (z_i.z_j)(y_i.y_j)`` and
    ``r_i = z_i^T X y_i``; reduces to :func:`diagonal_center` when both
    factors are orthonormal.
    """
    Z = as_dense(Z, "Z")
    Y = as_dense(Y, "Y")
    G = (Z.T @ Z) * (Y.T @ Y)
    r = np.einsum("ij,ij->j", Z, np.asarray(X @ Y))
    return np.linalg.pinv(G) @ r


def residual_sq(X, Z, B, Y) -> float:
    """``||X - Z B Y^T||_F^2`` (``B`` may be a 1-d diagonal)."""
    B = np.asarray(B, dtype=np.float64)
    if B.ndim == 1:
        B = np.diag(B)
    X = X.toarray() if sp.issparse(X) else np.asarray(X)
    R = X - Z @ B @ Y.T
    return float((R * R).sum())


def diagonal_baseline_pve(X, Z, Y) -> float:
    """Variance explained by ``Z D Y^T`` with the best diagonal ``D``.

    The comparison point for a full center: ``1 - min_D ||X - Z D Y^T||^2 / ||X||^2``.
    """
    d = least_squares_diagonal(X, Z, Y)
    return 1.0 - residual_sq(X, Z, d, Y) / frobenius_sq(as_matrix(X))


# --------------------------------------------------------------------------
# Polar-rotate-shrink


def _prs(A, gamma, cfg, kaiser, checked=False):
    Yt = polar(A) if checked else polar_unchecked(A)
    if cfg.rotation == "varimax":
        rot = rotate(Yt, "varimax", kaiser_normalize=kaiser, tol=cfg.rotation_tol)
    else:
        rot = rotate(Yt, "absmin", iters=cfg.absmin_iters)
    sh = soft_threshold(rot.rotated, gamma)
    return sh.matrix, rot, sh


def prs(A, gamma: float | None = None, rotation: str = "varimax", kaiser: bool = False) -> np.ndarray:
    """Polar, then rotate toward sparsity, then shrink to l1 budget ``gamma``.

    ``A`` is p x k with full column rank; ``gamma`` defaults to ``sqrt(p k)``.
    """
    A = as_dense(A, "A")
    p, k = A.shape
    if gamma is None:
        gamma = math.sqrt(p * k)
    cfg = FitConfig(k=k, gamma=gamma, rotation=rotation)
    out, _, _ = _prs(A, gamma, cfg, kaiser, checked=True)
    return out


# --------------------------------------------------------------------------
# Fitting


def _prepare(X, config):
    X = as_matrix(X)
    n, p = X.shape
    k = config.k
    if k > min(n, p):
        raise ValueError(f"k={k} exceeds min(n, p)={min(n, p)}")
    if frobenius_sq(X) == 0:
        raise ValueError("X is identically zero")
    return X, n, p, k


def _objective(X, Z, Y):
    return float(np.linalg.norm(Z.T @ np.asarray(X @ Y)))


def _converged(obj, prev, tol):
    return abs(obj - prev) <= tol * max(1.0, prev)


def _order_and_signs(X, M, transpose=False):
    """Permutation/sign matrix putting columns of ``M`` in EV order, largest |entry| positive."""
    k = M.shape[1]
    XM = np.asarray((X.T @ M) if transpose else (X @ M))
    ev = (XM * XM).sum(axis=0)
    first_nz = [int(np.flatnonzero(M[:, j])[0]) if np.any(M[:, j]) else M.shape[0] for j in range(k)]
    order = sorted(range(k), key=lambda j: (-ev[j], first_nz[j]))
    P = np.zeros((k, k))
    for new, old in enumerate(order):
        col = M[:, old]
        i = int(np.argmax(np.abs(col)))
        P[old, new] = -1.0 if col[i] < 0 else 1.0
    return P, ev[order]


def _zero_cols(M):
    return tuple(int(j) for j in np.flatnonzero(~np.any(M != 0, axis=0)))


def sca(X, config: FitConfig) -> ScaFit:
    """Sparse component analysis.

    Starting from the top-k singular vectors, alternate
    ``Y <- prs(X^T Z, gamma)`` and ``Z <- polar(X Y)`` until the relative
    change of ``||Z^T X Y||_F`` is at most ``tol`` or ``max_iter`` is hit.
    Components are then sorted by explained variance and sign-normalized;
    ``Z`` carries the same permutation so that ``Z = polar(X Y)`` still
    holds, and ``B = Z^T X Y``.
    """
    X, n, p, k = _prepare(X, config)
    gamma = config.gamma if config.gamma is not None else math.sqrt(p * k)
    check_gamma(gamma, k, p)
    kaiser = bool(config.kaiser_normalize)
    cfg = replace(config, gamma=float(gamma), kaiser_normalize=kaiser)

    svd = truncated_svd(X, k)
    Z, Y = svd.left, svd.right
    prev = _objective(X, Z, Y)
    trace = [prev]
    steps = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        XtZ = np.asarray(X.T @ Z)
        Y, rot, sh = _prs(XtZ, gamma, cfg, kaiser)
        y_star = rot.rotated
        unshrunk = float(np.linalg.norm(XtZ.T @ y_star))
        after_y = float(np.linalg.norm(XtZ.T @ Y))
        Z = polar_unchecked(np.asarray(X @ Y))
        obj = _objective(X, Z, Y)
        steps.append({
            "objective_unshrunk": unshrunk,
            "objective_after_y": after_y,
            "shrink_bound": float(np.linalg.norm(XtZ) * np.linalg.norm(Y - y_star)),
            "objective_after_z": obj,
            "threshold": sh.threshold,
            "rotation_iterations": rot.iterations,
        })
        trace.append(obj)
        if _converged(obj, prev, cfg.tol):
            converged = True
            break
        prev = obj

    P, ev = _order_and_signs(X, Y)
    Y = Y @ P
    Z = Z @ P
    B = Z.T @ np.asarray(X @ Y)
    _, pve_flag = _range_basis(Y)
    diag = {"steps": steps, "pve_rank_deficient": bool(pve_flag), "kernel_backend": _backend()}
    return ScaFit(Y, Z, B, ev, pve(X, Y), trace, it, converged, _zero_cols(Y), cfg, diag)


def sma(X, config: FitConfig) -> SmaFit:
    """Sparse matrix approximation: l1 budgets on both ``Z`` and ``Y``.

    Alternates ``Z <- prs(X Y, gamma_z)`` and ``Y <- prs(X^T Z, gamma)`` from
    the SVD start, with the same stopping rule as :func:`sca`, and returns
    ``B = Z^T X Y``. Columns of ``Z`` and ``Y`` are each sorted by explained
    variance and sign-normalized.
    """
    X, n, p, k = _prepare(X, config)
    gamma_y = config.gamma if config.gamma is not None else math.sqrt(p * k)
    gamma_z = config.gamma_z if config.gamma_z is not None else math.sqrt(n * k)
    check_gamma(gamma_y, k, p, "gamma")
    check_gamma(gamma_z, k, n, "gamma_z")
    kaiser = bool(config.kaiser_normalize)
    cfg = replace(config, gamma=float(gamma_y), gamma_z=float(gamma_z), kaiser_normalize=kaiser)

    svd = truncated_svd(X, k)
    Z, Y = svd.left, svd.right
    prev = _objective(X, Z, Y)
    trace = [prev]
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        Z, _, _ = _prs(np.asarray(X @ Y), gamma_z, cfg, kaiser)
        Y, _, _ = _prs(np.asarray(X.T @ Z), gamma_y, cfg, kaiser)
        obj = _objective(X, Z, Y)
        trace.append(obj)
        if _converged(obj, prev, cfg.tol):
            converged = True
            break
        prev = obj

    Py, ev = _order_and_signs(X, Y)
    Pz, _ = _order_and_signs(X, Z, transpose=True)
    Y, Z = Y @ Py, Z @ Pz
    B = Z.T @ np.asarray(X @ Y)
    _, pve_flag = _range_basis(Y)
    diag = {"pve_rank_deficient": bool(pve_flag), "kernel_backend": _backend()}
    return SmaFit(Y, Z, B, ev, pve(X, Y), trace, it, converged, _zero_cols(Y), cfg, diag,
                  gamma_z=float(gamma_z), zero_columns_z=_zero_cols(Z))


def sparse_coding(X, config: FitConfig) -> SparseCodingFit:
    """Sparse scores by running :func:`sca` on ``X^T``.

    With ``X^T ~ Z' B' Y'^T`` the sparse scores of ``X`` are ``Y'`` and the
    basis is ``B'^T Z'^T``. Kaiser normalization defaults to on.
    """
    if config.kaiser_normalize is None:
        config = replace(config, kaiser_normalize=True)
    X = as_matrix(X)
    fit = sca(X.T, config)
    return SparseCodingFit(fit.loadings, fit.center.T @ fit.scores_basis.T, fit)


def fit_dispatch(X, config: FitConfig, mode: str = "sca"):
    if mode == "sca":
        return sca(X, config)
    if mode == "sma":
        return sma(X, config)
    raise ValueError(f"unknown mode {mode!r}")


def _backend():
    from . import kernels

    return kernels.BACKEND


__all__ = [
    "FitConfig", "ScaFit", "SmaFit", "SparseCodingFit", "GammaRangeWarning", "RankDeficientError",
    "prs", "sca", "sma", "sparse_coding", "optimal_center", "diagonal_center",
    "least_squares_diagonal", "diagonal_baseline_pve", "residual_sq", "pve", "component_ev",
    "check_gamma",
]
