"""Hankel matrices of Markov sequences and the Toeplitz maps tied to them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numkernel as nk
from .errors import DimensionError


def hankel_matrix(g, rows: int) -> np.ndarray:
    """``rows`` x ``(n - rows + 1)`` Hankel matrix with ``h[i, j] = g[i + j]``."""
    g = np.asarray(g, dtype=float).ravel()
    cols = g.size - rows + 1
    if rows < 1 or cols < 1:
        raise DimensionError(f"cannot build a {rows}-row Hankel from {g.size} values")
    idx = np.arange(rows)[:, None] + np.arange(cols)[None, :]
    return g[idx]


@dataclass(frozen=True)
class HankelSet:
    """Hankel matrix ``H_fp`` of a Markov sequence, partitioned at row ``nx``.

    ``h_plus`` holds the first ``nx`` rows and ``h_minus`` the remaining
    ``f + 1 - nx`` rows (a single row in the default ``f = nx`` case). SVD
    factors of ``h`` and ``h_plus`` are computed once at construction.
    """

    g: np.ndarray
    nx: int
    f: int
    h: np.ndarray
    h_plus: np.ndarray
    h_minus: np.ndarray
    svd_full: nk.SvdFactors
    svd_plus: nk.SvdFactors

    @property
    def n(self) -> int:
        return self.g.size

    @property
    def p(self) -> int:
        return self.n - self.f - 1

    @property
    def sigma(self) -> np.ndarray:
        return self.svd_full.s

    @property
    def sigma_plus(self) -> np.ndarray:
        return self.svd_plus.s


def build_hankel(g, nx: int, f: int | None = None) -> HankelSet:
    """Build and factor the Hankel matrix of ``g``.

    Parameters
    ----------
    g : array_like
        Markov parameters ``g_0 .. g_{n-1}``.
    nx : int
        State dimension; the partition row.
    f : int, optional
        Future horizon (row count minus one). Defaults to ``nx``.
    """
    g = np.array(g, dtype=float).ravel()
    f = nx if f is None else int(f)
    if nx < 1:
        raise DimensionError("nx must be positive")
    if f < nx:
        raise DimensionError(f"future horizon f={f} must be >= nx={nx}")
    p = g.size - f - 1
    if p < nx:
        raise DimensionError(
            f"{g.size} Markov parameters too short for f={f}, nx={nx}: "
            f"need at least {f + nx + 1}")
    if not np.all(np.isfinite(g)):
        raise DimensionError("Markov parameters must be finite")
    g.setflags(write=False)
    h = hankel_matrix(g, f + 1)
    h_plus, h_minus = h[:nx], h[nx:]
    return HankelSet(g=g, nx=nx, f=f, h=h, h_plus=h_plus, h_minus=h_minus,
                     svd_full=nk.svd(h), svd_plus=nk.svd(h_plus))


def extended_row(a) -> np.ndarray:
    """``[a_nx, ..., a_1, 1]``."""
    return np.append(np.asarray(a, dtype=float).ravel(), 1.0)


def toeplitz_t(a, n: int) -> np.ndarray:
    """Toeplitz map ``T(a)`` of shape ``n x (n - nx)``.

    For any Markov perturbation ``dg``, ``[a, 1] @ hankel(dg, nx+1)`` equals
    ``dg @ T(a)``.
    """
    col = extended_row(a)
    nx = col.size - 1
    if n <= nx:
        raise DimensionError(f"n={n} must exceed nx={nx}")
    t = np.zeros((n, n - nx))
    for j in range(n - nx):
        t[j:j + nx + 1, j] = col
    return t


def banded_nf(a, f: int) -> np.ndarray:
    """Banded Toeplitz matrix ``N_f(a)`` with rows shifted copies of ``[a, 1]``."""
    row = extended_row(a)
    nx = row.size - 1
    if f < nx:
        raise DimensionError(f"f={f} must be >= nx={nx}")
    out = np.zeros((f + 1 - nx, f + 1))
    for i in range(f + 1 - nx):
        out[i, i:i + nx + 1] = row
    return out
