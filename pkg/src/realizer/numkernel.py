"""
Dense linear-algebra primitives.

All routines operate on float64 ``numpy`` arrays and are pure. The SVD
applies a fixed sign convention so that factors are reproducible across
calls: in every left singular vector the entry of largest magnitude is
nonnegative (ties go to the lowest index) and the matching right singular
vector is flipped with it.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DimensionError, NumericalFailure

EPS = np.finfo(float).eps


class SvdFactors(NamedTuple):
    """Full SVD ``m = u @ diag(s) @ vt`` (``s`` padded into an m x k frame)."""

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray

    @property
    def v(self) -> np.ndarray:
        return self.vt.T

    def reconstruct(self) -> np.ndarray:
        m, k = self.u.shape[0], self.vt.shape[0]
        frame = np.zeros((m, k))
        r = len(self.s)
        frame[:r, :r] = np.diag(self.s)
        return self.u @ frame @ self.vt


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    arr = np.array(m, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise NumericalFailure(f"{name} has non-finite entries")
    return arr


def _largest_entry_sign(vec: np.ndarray) -> float:
    idx = int(np.argmax(np.abs(vec)))
    return -1.0 if vec[idx] < 0 else 1.0


def svd(m) -> SvdFactors:
    """Full singular value decomposition with a deterministic sign convention.

    Parameters
    ----------
    m : array_like, shape (rows, cols)
        Nonempty finite matrix.

    Returns
    -------
    SvdFactors
        ``u`` is rows x rows, ``s`` has min(rows, cols) nonincreasing
        entries and ``vt`` is cols x cols.
    """
    a = as_matrix(m)
    if a.size == 0:
        raise DimensionError("svd of an empty matrix")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=True)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalFailure(f"SVD did not converge: {exc}", residual=np.inf) from exc
    r = len(s)
    for i in range(u.shape[1]):
        if _largest_entry_sign(u[:, i]) < 0:
            u[:, i] = -u[:, i]
            if i < r:
                vt[i, :] = -vt[i, :]
    # rows of vt without a partner column in u only have the convention to go by
    for i in range(r, vt.shape[0]):
        if _largest_entry_sign(vt[i, :]) < 0:
            vt[i, :] = -vt[i, :]
    return SvdFactors(u, s, vt)


def singular_values(m) -> np.ndarray:
    return np.linalg.svd(as_matrix(m), compute_uv=False)


def default_rank_tol(shape) -> float:
    return max(shape) * EPS


def numerical_rank(m, rank_tol: float | None = None) -> int:
    a = as_matrix(m)
    s = singular_values(a)
    if s.size == 0 or s[0] == 0.0:
        return 0
    tol = default_rank_tol(a.shape) if rank_tol is None else rank_tol
    return int(np.sum(s > tol * s[0]))


def pinv(m, rank_tol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse through the SVD.

    Singular values at or below ``rank_tol * s[0]`` are treated as zero;
    ``rank_tol`` defaults to ``max(rows, cols) * eps``. An all-zero input
    yields the zero matrix of transposed shape.
    """
    a = as_matrix(m)
    if rank_tol is not None and rank_tol < 0:
        raise ValueError("rank_tol must be nonnegative")
    rows, cols = a.shape
    if a.size == 0:
        return np.zeros((cols, rows))
    f = svd(a)
    if f.s[0] == 0.0:
        return np.zeros((cols, rows))
    tol = default_rank_tol(a.shape) if rank_tol is None else rank_tol
    keep = f.s > tol * f.s[0]
    r = int(np.sum(keep))
    u1 = f.u[:, :r]
    v1 = f.vt[:r, :].T
    return (v1 / f.s[:r]) @ u1.T


def sym_eig(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix, eigenvalues ascending."""
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"sym_eig needs a square matrix, got {a.shape}")
    scale = max(np.linalg.norm(a, 2), 1.0) if a.size else 1.0
    if np.linalg.norm(a - a.T, 2) > 1e-8 * scale:
        raise ValueError("sym_eig input is not symmetric")
    w, q = np.linalg.eigh(0.5 * (a + a.T))
    return w, q


def spectral_norm(m) -> float:
    a = as_matrix(m)
    if a.size == 0:
        return 0.0
    return float(singular_values(a)[0])


def op_norm_diff(p1, p2) -> float:
    """Operator-norm distance ``||p1 - p2||`` (sin-theta distance for projectors)."""
    a, b = as_matrix(p1, "p1"), as_matrix(p2, "p2")
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return spectral_norm(a - b)


def range_projector(basis) -> np.ndarray:
    """Orthogonal projector onto the column span of ``basis`` (full column rank)."""
    q, _ = np.linalg.qr(as_matrix(basis))
    return q @ q.T
