"""Matrix containers and the factorization primitives used by the solvers.

Dense matrices are plain ``numpy.ndarray`` objects (2-d, float64, finite).
Sparse matrices are ``scipy.sparse`` CSR matrices built from validated
triplets. Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

RANK_TOL = 1e-12

# Above this size a sparse input goes through the matvec-only solver.
_DENSE_SVD_LIMIT = 200


class RankDeficientError(ValueError):
    """Raised when a matrix expected to have full column rank does not."""


@dataclass(frozen=True)
class SvdResult:
    """Top-k singular triplets, singular values nonincreasing."""

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singular_values) @ self.right.T


def as_dense(X, name="X") -> np.ndarray:
    """Validate and convert ``X`` to a 2-d finite float64 array."""
    if sp.issparse(X):
        X = X.toarray()
    A = np.asarray(X, dtype=np.float64)
    if A.ndim == 1:
        A = A.reshape(-1, 1)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-d matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def as_matrix(X, name="X"):
    """Accept a dense array or a scipy sparse matrix; sparse stays sparse (CSR)."""
    if sp.issparse(X):
        X = sp.csr_matrix(X, dtype=np.float64)
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError(f"{name} must be non-empty, got shape {X.shape}")
        if not np.all(np.isfinite(X.data)):
            raise ValueError(f"{name} has non-finite entries")
        return X
    return as_dense(X, name)


def sparse_from_triplets(rows, cols, values, shape) -> sp.csr_matrix:
    """Build a CSR matrix from 0-based triplets.

    Duplicate coordinates, out-of-range indices and explicit zeros are
    rejected rather than summed or dropped.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    n, p = int(shape[0]), int(shape[1])
    if n < 1 or p < 1:
        raise ValueError(f"invalid shape {shape}")
    if not (rows.shape == cols.shape == values.shape) or rows.ndim != 1:
        raise ValueError("rows, cols and values must be 1-d and of equal length")
    if rows.size:
        if rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= p:
            raise ValueError("triplet index out of bounds")
        if np.any(values == 0):
            raise ValueError("stored values must be nonzero")
        if not np.all(np.isfinite(values)):
            raise ValueError("stored values must be finite")
        keys = rows * p + cols
        if np.unique(keys).size != keys.size:
            raise ValueError("duplicate coordinates in triplets")
    return sp.csr_matrix((values, (rows, cols)), shape=(n, p))


def _fix_signs(U, V):
    # Make the largest-magnitude entry of each right vector positive.
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, V * signs


def truncated_svd(X, k: int) -> SvdResult:
    """Top-``k`` singular triplets of a dense or sparse matrix.

    Dense inputs, and small sparse ones, use LAPACK. Large sparse inputs use
    ARPACK (Lanczos, matvec access only) with a fixed start vector so that
    results are deterministic.
    """
    X = as_matrix(X)
    n, p = X.shape
    k = int(k)
    if not 1 <= k <= min(n, p):
        raise ValueError(f"k={k} out of range [1, {min(n, p)}]")
    if sp.issparse(X) and min(n, p) > _DENSE_SVD_LIMIT and k < min(n, p) - 1:
        v0 = np.ones(min(n, p)) / np.sqrt(min(n, p))
        U, s, Vt = spla.svds(X, k=k, v0=v0, solver="arpack", tol=0, maxiter=20 * min(n, p))
        order = np.argsort(-s, kind="stable")
        U, s, V = U[:, order], s[order], Vt[order].T
    else:
        A = X.toarray() if sp.issparse(X) else X
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
        U, s, V = U[:, :k], s[:k], Vt[:k].T
    U, V = _fix_signs(U, V)
    return SvdResult(np.ascontiguousarray(U), np.maximum(s, 0.0), np.ascontiguousarray(V))


def polar(X) -> np.ndarray:
    """Orthonormal polar factor ``X (X^T X)^{-1/2}``, computed as ``U V^T``.

    Raises
    ------
    RankDeficientError
        If the smallest singular value is below ``1e-12`` times the largest.
    """
    X = as_dense(X)
    n, k = X.shape
    if k > n:
        raise ValueError(f"polar needs rows >= cols, got shape {X.shape}")
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    if s[0] == 0 or s[-1] < RANK_TOL * s[0]:
        raise RankDeficientError("polar of a rank-deficient matrix is not unique")
    return U @ Vt


def polar_unchecked(X) -> np.ndarray:
    """``U V^T`` from the thin SVD without the rank check.

    For rank-deficient input this is still a maximizer of ``tr(P^T X)`` over
    orthonormal-column ``P``, just not the unique one.
    """
    U, _, Vt = np.linalg.svd(np.asarray(X, dtype=np.float64), full_matrices=False)
    return U @ Vt


def entrywise_norm(X, p: float) -> float:
    """Entrywise l_p norm ``(sum |X_ij|^p)^(1/p)`` for ``p >= 1``."""
    p = float(p)
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    A = np.abs(as_dense(X))
    if np.isinf(p):
        return float(A.max())
    if p == 1:
        return float(A.sum())
    if p == 2:
        return float(np.sqrt((A * A).sum()))
    return float((A**p).sum() ** (1.0 / p))


def frobenius_sq(X) -> float:
    if sp.issparse(X):
        return float((X.data**2).sum())
    return float(np.sum(np.asarray(X) ** 2))


# --------------------------------------------------------------------------
# File formats


def atomic_write(path, data: str | bytes) -> None:
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "", "encoding": "utf-8"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dense_to_csv(X, header=None) -> str:
    """Serialize with shortest round-trip float repr (bit-exact on reload)."""
    X = as_dense(X)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header is not None:
        if len(header) != X.shape[1]:
            raise ValueError("header length does not match column count")
        w.writerow(header)
    for row in X:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def dense_from_csv(text: str, header: bool = False):
    """Parse CSV text. Returns ``(matrix, header_or_None)``."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    names = None
    if header:
        if not rows:
            raise ValueError("missing header row")
        names, rows = [c.strip() for c in rows[0]], rows[1:]
    if not rows:
        raise ValueError("no data rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("ragged CSV rows")
    try:
        X = np.array([[float(c) for c in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"malformed numeric entry: {exc}") from None
    return as_dense(X), names


def write_csv(path, X, header=None) -> None:
    atomic_write(path, dense_to_csv(X, header))


def read_csv(path, header: bool = False) -> np.ndarray:
    X, _ = dense_from_csv(Path(path).read_text(encoding="utf-8"), header=header)
    return X


def sparse_to_mtx(A) -> str:
    """MatrixMarket coordinate/real/general text with 1-based indices."""
    A = sp.coo_matrix(A)
    A.sum_duplicates()
    order = np.lexsort((A.row, A.col))
    rows, cols, vals = A.row[order], A.col[order], A.data[order]
    keep = vals != 0
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    lines = ["%%MatrixMarket matrix coordinate real general", f"{A.shape[0]} {A.shape[1]} {rows.size}"]
    lines.extend(f"{r + 1} {c + 1} {float(v)!r}" for r, c, v in zip(rows, cols, vals))
    return "\n".join(lines) + "\n"


def sparse_from_mtx(text: str) -> sp.csr_matrix:
    """Parse MatrixMarket coordinate text (real/integer/pattern; general/symmetric)."""
    lines = text.splitlines()
    if not lines or not lines[0].lower().startswith("%%matrixmarket"):
        raise ValueError("missing %%MatrixMarket banner")
    banner = lines[0].lower().split()
    if len(banner) < 5 or banner[1] != "matrix" or banner[2] != "coordinate":
        raise ValueError("only 'matrix coordinate' MatrixMarket files are supported")
    field, symmetry = banner[3], banner[4]
    if field not in ("real", "integer", "pattern") or symmetry not in ("general", "symmetric"):
        raise ValueError(f"unsupported MatrixMarket variant: {field} {symmetry}")
    body = [ln for ln in lines[1:] if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise ValueError("missing size line")
    try:
        n, p, nnz = (int(t) for t in body[0].split())
        entries = [ln.split() for ln in body[1:]]
        if len(entries) != nnz:
            raise ValueError(f"expected {nnz} entries, found {len(entries)}")
        rows = np.array([int(e[0]) - 1 for e in entries], dtype=np.int64)
        cols = np.array([int(e[1]) - 1 for e in entries], dtype=np.int64)
        if field == "pattern":
            vals = np.ones(len(entries))
        else:
            vals = np.array([float(e[2]) for e in entries], dtype=np.float64)
    except (IndexError, ValueError) as exc:
        raise ValueError(f"malformed MatrixMarket body: {exc}") from None
    if symmetry == "symmetric":
        off = rows != cols
        rows, cols, vals = (np.concatenate([rows, cols[off]]), np.concatenate([cols, rows[off]]),
                            np.concatenate([vals, vals[off]]))
    return sparse_from_triplets(rows, cols, vals, (n, p))


def write_mtx(path, A) -> None:
    atomic_write(path, sparse_to_mtx(A))


def read_mtx(path) -> sp.csr_matrix:
    return sparse_from_mtx(Path(path).read_text(encoding="utf-8"))


def read_matrix(path, header: bool = False):
    """Read ``.mtx`` as sparse, anything else as dense CSV."""
    if str(path).lower().endswith(".mtx"):
        return read_mtx(path)
    return read_csv(path, header=header)
