"""Synthetic data generators and evaluation metrics.

Random streams: every generator takes an integer seed, builds a
``numpy.random.SeedSequence`` from it and spawns one child stream per
entity in a fixed order (documented per function). Streams are PCG64
(``numpy.random.default_rng``), which is portable across platforms.
Matrices are filled in row-major (C) order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment

from .matcore import as_dense, sparse_from_triplets
from .shrink import soft_threshold

FOUR_BLOCK_CONNECTIVITY = np.array([
    [0.6, 0.2, 0.1, 0.1],
    [0.2, 0.7, 0.05, 0.05],
    [0.1, 0.05, 0.6, 0.25],
    [0.1, 0.05, 0.25, 0.6],
])

_EXHAUSTIVE_MAX_K = 8


def _streams(seed, count):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(int(seed)).spawn(count)]


def random_stiefel(rng, n, k):
    """Haar-uniform ``n x k`` orthonormal matrix: QR of a Gaussian with ``diag(R) > 0``."""
    G = rng.standard_normal((n, k))
    Q, R = np.linalg.qr(G)
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return Q * d


def singular_rule_decay(k):
    """``sigma_l = 10 - sqrt(l)`` for ``l = 1..k``."""
    return 10.0 - np.sqrt(np.arange(1, k + 1))


@dataclass(frozen=True)
class LowRankInstance:
    X: np.ndarray
    truth_loadings: np.ndarray
    truth_scores: np.ndarray
    seed: int

    def truth_dict(self):
        return {"seed": self.seed, "truth_loadings": self.truth_loadings.tolist(),
                "truth_scores": self.truth_scores.tolist()}


def gen_lowrank(n=100, p=100, k=16, singular_rule=singular_rule_decay, truth_gamma=20.0,
                noise_sd=0.1, seed=0) -> LowRankInstance:
    """``X = S Y^T + E`` with ``S = U diag(sigma) V^T`` and soft-thresholded ``Y``.

    Streams, in spawn order: ``U`` (n x k Stiefel), ``V`` (k x k orthogonal),
    loadings (p x k Stiefel, then soft-thresholded to l1 = ``truth_gamma``),
    noise (n x p Gaussian with sd ``noise_sd``).

    ``singular_rule`` is a callable ``k -> sigma`` or a sequence of length k.
    """
    if not (1 <= k <= min(n, p)):
        raise ValueError(f"need 1 <= k <= min(n, p), got k={k}, n={n}, p={p}")
    if noise_sd < 0:
        raise ValueError("noise_sd must be >= 0")
    sigma = np.asarray(singular_rule(k) if callable(singular_rule) else singular_rule, dtype=float)
    if sigma.shape != (k,):
        raise ValueError(f"singular_rule must give {k} values")
    r_u, r_v, r_y, r_e = _streams(seed, 4)
    U = random_stiefel(r_u, n, k)
    V = random_stiefel(r_v, k, k)
    S = (U * sigma) @ V.T
    Y = random_stiefel(r_y, p, k)
    if truth_gamma is not None:
        Y = soft_threshold(Y, truth_gamma).matrix
    E = noise_sd * r_e.standard_normal((n, p))
    return LowRankInstance(S @ Y.T + E, Y, S, int(seed))


@dataclass(frozen=True)
class SbmInstance:
    adjacency: sp.csr_matrix
    labels: np.ndarray
    connectivity: np.ndarray
    seed: int

    def truth_dict(self):
        return {"seed": self.seed, "labels": self.labels.tolist(),
                "connectivity": self.connectivity.tolist()}


def gen_sbm(n, block_sizes, connectivity, seed=0) -> SbmInstance:
    """Undirected stochastic block model without self-loops.

    Nodes are labeled ``1..k`` in contiguous blocks. One uniform draw per
    upper-triangle pair ``(i < j)`` in row-major order from a single stream;
    edge iff draw < ``connectivity[z(i), z(j)]``. The lower triangle mirrors.
    """
    block_sizes = [int(b) for b in block_sizes]
    C = np.asarray(connectivity, dtype=np.float64)
    k = len(block_sizes)
    if any(b < 0 for b in block_sizes) or sum(block_sizes) != n:
        raise ValueError(f"block sizes {block_sizes} must be nonnegative and sum to n={n}")
    if C.shape != (k, k):
        raise ValueError(f"connectivity must be {k}x{k}")
    if not np.all((C >= 0) & (C <= 1)):
        raise ValueError("connectivity probabilities must lie in [0, 1]")
    if not np.allclose(C, C.T, rtol=0, atol=0):
        raise ValueError("connectivity must be symmetric")
    labels = np.repeat(np.arange(1, k + 1), block_sizes)
    (rng,) = _streams(seed, 1)
    iu, ju = np.triu_indices(n, k=1)
    draws = rng.random(iu.size)
    hit = draws < C[labels[iu] - 1, labels[ju] - 1]
    r, c = iu[hit], ju[hit]
    rows = np.concatenate([r, c])
    cols = np.concatenate([c, r])
    A = sparse_from_triplets(rows, cols, np.ones(rows.size), (n, n))
    return SbmInstance(A, labels, C, int(seed))


def expected_mean_degree(block_sizes, connectivity):
    """Mean expected node degree of an SBM without self-loops."""
    sizes = np.asarray(block_sizes, dtype=np.float64)
    C = np.asarray(connectivity, dtype=np.float64)
    n = sizes.sum()
    return float((sizes @ C @ sizes - sizes @ np.diag(C)) / n)


def scale_to_degree(block_sizes, connectivity, degree):
    """Rescale ``connectivity`` so the mean expected degree equals ``degree``."""
    base = expected_mean_degree(block_sizes, connectivity)
    if base <= 0:
        raise ValueError("connectivity has no edges to rescale")
    return np.asarray(connectivity, dtype=np.float64) * (degree / base)


def four_block_sbm(n=900, scale=0.05, seed=0, expected_degree=None) -> SbmInstance:
    """Four equal blocks with the reference connectivity pattern.

    The pattern is multiplied by ``scale``, or, if ``expected_degree`` is
    given, by whatever factor gives that mean expected degree.
    """
    sizes = [n // 4 + (1 if i < n % 4 else 0) for i in range(4)]
    if expected_degree is not None:
        C = scale_to_degree(sizes, FOUR_BLOCK_CONNECTIVITY, expected_degree)
    else:
        C = scale * FOUR_BLOCK_CONNECTIVITY
    return gen_sbm(n, sizes, C, seed)


def assign_clusters(Y, seed=0) -> np.ndarray:
    """Label rows by the column of largest ``|Y_ij|`` (labels ``1..k``).

    Ties and all-zero rows get a uniform draw among the tied columns from a
    generator seeded with ``seed``, consumed in row order.
    """
    A = np.abs(as_dense(Y, "Y"))
    rng = np.random.default_rng(int(seed))
    top = A.max(axis=1, keepdims=True)
    labels = np.empty(A.shape[0], dtype=np.int64)
    for i, row in enumerate(A == top):
        cand = np.flatnonzero(row)
        labels[i] = cand[0] if cand.size == 1 else rng.choice(cand)
    return labels + 1


def accuracy(C, C_star, k: int) -> float:
    """Best agreement fraction over relabelings ``pi`` of ``C``.

    Exhaustive over permutations for ``k <= 8``; otherwise an optimal
    assignment on the confusion matrix, which gives the same maximum.
    """
    C = np.asarray(C, dtype=np.int64)
    Cs = np.asarray(C_star, dtype=np.int64)
    if C.shape != Cs.shape or C.ndim != 1:
        raise ValueError("label vectors must be 1-d and of equal length")
    if C.size == 0:
        raise ValueError("empty label vectors")
    for v in (C, Cs):
        if v.min() < 1 or v.max() > k:
            raise ValueError(f"labels must lie in 1..{k}")
    M = np.zeros((k, k), dtype=np.int64)
    np.add.at(M, (C - 1, Cs - 1), 1)
    if k <= _EXHAUSTIVE_MAX_K:
        best = max(M[np.arange(k), perm].sum() for perm in itertools.permutations(range(k)))
    else:
        r, c = linear_sum_assignment(-M)
        best = M[r, c].sum()
    return float(best) / C.size


def excess_kurtosis(x) -> float:
    """``n sum (x - mean)^4 / (sum (x - mean)^2)^2 - 3``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < 2:
        raise ValueError("need at least two values")
    d = x - x.mean()
    m2 = float((d * d).sum())
    if m2 == 0 or not math.isfinite(m2):
        raise ValueError("kurtosis undefined for a constant vector")
    return x.size * float((d**4).sum()) / m2**2 - 3.0


def sparse_sources(side=32, k=3, seed=0, density=0.3):
    """Synthetic ``side x side`` images with disjoint supports, as columns.

    Pixels are split at random among ``k`` sources plus a background that
    is zero in all of them; a source pixel holds ``1 + Exp(1)`` intensity.
    Streams: support assignment, then intensities. Returns ``(side**2, k)``.
    """
    r_sup, r_val = _streams(seed, 2)
    npix = side * side
    owner = r_sup.integers(0, k, size=npix)
    on = r_sup.random(npix) < density * k
    vals = 1.0 + r_val.exponential(1.0, size=npix)
    S = np.zeros((npix, k))
    idx = np.flatnonzero(on)
    S[idx, owner[idx]] = vals[idx]
    return S


def bss_instance(side=32, k=3, seed=0):
    """Mixtures ``X = S M^T`` (pixels x mixtures) with ``M_ij ~ Unif(0, 1)``.

    Returns ``(X, S, M)``. ``M`` comes from a third spawned stream.
    """
    S = sparse_sources(side, k, seed)
    (r_m,) = np.random.SeedSequence(int(seed)).spawn(3)[2:]
    M = np.random.default_rng(r_m).random((k, k))
    return S @ M.T, S, M


def match_columns(est, truth):
    """Absolute correlations after the best signed permutation of ``est``'s columns.

    Returns an array of ``|corr|`` per truth column.
    """
    est, truth = as_dense(est), as_dense(truth)
    ke, k = est.shape[1], truth.shape[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        C = np.nan_to_num(np.abs(np.corrcoef(est.T, truth.T)[:ke, ke:]))
    r, c = linear_sum_assignment(-C)
    out = np.zeros(k)
    out[c] = C[r, c]
    return out
