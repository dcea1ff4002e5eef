"""Choosing k and gamma by element-wise K-fold cross-validation.

Each fold zeroes a random 1/K of the entries, fits every candidate on the
zeroed matrix and scores the summed squared error on the held-out entries.
SCA reconstructs with the projection ``X_fold Y Y^T``; SMA with ``Z B Y^T``.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .decomp import FitConfig, sca, sma
from .matcore import as_dense

DEFAULT_FOLDS = 10


@dataclass(frozen=True)
class FoldPlan:
    n: int
    p: int
    K: int
    masks: tuple
    seed: int

    def coords(self, fold):
        """Row and column indices of the entries held out in ``fold``."""
        return np.unravel_index(self.masks[fold], (self.n, self.p))


def make_folds(n: int, p: int, K: int = DEFAULT_FOLDS, seed: int = 0) -> FoldPlan:
    """Random partition of the ``n*p`` entry indices into ``K`` near-equal masks."""
    total = int(n) * int(p)
    if total < 1:
        raise ValueError("empty matrix")
    if not 2 <= K <= total:
        raise ValueError(f"K={K} out of range [2, {total}]")
    perm = np.random.default_rng(int(seed)).permutation(total)
    masks = tuple(np.sort(m) for m in np.array_split(perm, K))
    return FoldPlan(int(n), int(p), int(K), masks, int(seed))


@dataclass
class CvResult:
    grid: list
    mse: np.ndarray
    mean_mse: np.ndarray
    selected: int
    mode: str

    @property
    def best(self) -> FitConfig:
        return self.grid[self.selected]

    def rows(self):
        """``(candidate, fold, mse)`` triples in candidate-major order."""
        return [(c, f, float(self.mse[c, f])) for c in range(self.mse.shape[0])
                for f in range(self.mse.shape[1])]

    def summary(self):
        return {
            "mode": self.mode,
            "grid": [g.to_dict() for g in self.grid],
            "mean_mse": [None if math.isnan(v) else float(v) for v in self.mean_mse],
            "selected": int(self.selected),
            "selected_config": self.best.to_dict(),
        }


def masked_copy(X, plan: FoldPlan, fold: int) -> np.ndarray:
    Xf = np.array(X, dtype=np.float64, copy=True)
    Xf[plan.coords(fold)] = 0.0
    return Xf


def reconstruct(Xf, fit, mode):
    if mode == "sca":
        return Xf @ fit.loadings @ fit.loadings.T
    return fit.scores_basis @ fit.center @ fit.loadings.T


def heldout_sse(X, Xhat, plan: FoldPlan, fold: int) -> float:
    r, c = plan.coords(fold)
    d = Xhat[r, c] - X[r, c]
    return float(np.dot(d, d))


def _resolved_gamma(cfg, p):
    return cfg.gamma if cfg.gamma is not None else math.sqrt(p * cfg.k)


def select(mean_mse, grid, p, rel_tol=1e-12) -> int:
    """Index of the minimal mean MSE; near-ties go to smaller gamma, then smaller k."""
    finite = [i for i, v in enumerate(mean_mse) if math.isfinite(v)]
    if not finite:
        raise RuntimeError("every candidate failed")
    best = min(mean_mse[i] for i in finite)
    tied = [i for i in finite if mean_mse[i] <= best + rel_tol * max(abs(best), 1e-300)]
    return min(tied, key=lambda i: (_resolved_gamma(grid[i], p), grid[i].k, i))


def cross_validate(X, grid, K: int = DEFAULT_FOLDS, seed: int = 0, mode: str = "sca",
                   jobs: int = 1) -> CvResult:
    """Score each candidate in ``grid`` by held-out squared error.

    Parameters
    ----------
    X : (n, p) array
    grid : sequence of FitConfig
    K : int
        Number of folds.
    seed : int
        Seed for the fold partition.
    mode : {"sca", "sma"}
    jobs : int
        Threads used for the independent (candidate, fold) fits. Results are
        assembled by index, so the output does not depend on ``jobs``.

    A candidate whose fit raises on any fold is reported with NaN for that
    fold and excluded from selection.
    """
    if mode not in ("sca", "sma"):
        raise ValueError(f"unknown mode {mode!r}")
    grid = list(grid)
    if not grid:
        raise ValueError("grid is empty")
    X = as_dense(X)
    n, p = X.shape
    for cfg in grid:
        if cfg.k > min(n, p):
            raise ValueError(f"candidate k={cfg.k} exceeds min(n, p)")
    plan = make_folds(n, p, K, seed)
    folds = [masked_copy(X, plan, f) for f in range(K)]
    fitter = sca if mode == "sca" else sma

    def job(ci, f):
        cfg = grid[ci]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = fitter(folds[f], cfg)
        return heldout_sse(X, reconstruct(folds[f], fit, mode), plan, f)

    tasks = [(ci, f) for ci in range(len(grid)) for f in range(K)]
    mse = np.full((len(grid), K), np.nan)

    def run(task):
        try:
            return task, job(*task), None
        except Exception as exc:  # noqa: BLE001
            return task, math.nan, exc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]
    failed = set()
    for (ci, f), val, exc in results:
        mse[ci, f] = val
        if exc is not None:
            failed.add(ci)
            warnings.warn(f"candidate {ci} failed on fold {f}: {exc}", RuntimeWarning, stacklevel=2)
    mean = np.array([math.nan if ci in failed else float(mse[ci].mean()) for ci in range(len(grid))])
    return CvResult(grid, mse, mean, select(mean, grid, p), mode)


def make_grid(k_values, gamma_values=None, base: FitConfig | None = None):
    """Cartesian product of ``k`` and ``gamma`` values as FitConfigs.

    ``gamma_values=None`` means the default budget for each ``k``.
    """
    base = base or FitConfig(k=1)
    gammas = list(gamma_values) if gamma_values else [None]
    return [replace(base, k=int(k), gamma=None if g is None else float(g))
            for k in k_values for g in gammas]
