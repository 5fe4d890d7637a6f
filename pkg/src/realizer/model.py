"""
SISO state-space models and the quantities derived directly from them.

Markov sequences and characteristic polynomials are plain 1-D float arrays.
A characteristic polynomial is stored as ``[a_nx, ..., a_1]`` so that
``[a, 1]`` is the left null vector of the (nx+1)-row observability matrix,
i.e. ``A^nx + a_1 A^(nx-1) + ... + a_nx I = 0``.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import numkernel as nk
from .errors import (
    DegenerateReferenceError,
    DimensionError,
    InstabilityError,
    RankError,
    SamplingError,
)

log = logging.getLogger(__name__)

FIT_HORIZON = 100


@dataclass(frozen=True)
class StateSpaceModel:
    """Discrete-time SISO system ``x+ = A x + B u``, ``y = C x`` (no feedthrough)."""

    a_mat: np.ndarray
    b_vec: np.ndarray
    c_vec: np.ndarray

    def __post_init__(self):
        a = nk.as_matrix(self.a_mat, "A")
        nx = a.shape[0]
        if a.shape != (nx, nx):
            raise DimensionError(f"A must be square, got {a.shape}")
        b = np.array(self.b_vec, dtype=float).reshape(-1, 1)
        c = np.array(self.c_vec, dtype=float).reshape(1, -1)
        if b.shape != (nx, 1) or c.shape != (1, nx):
            raise DimensionError(f"B {b.shape} / C {c.shape} inconsistent with nx={nx}")
        for name, arr in (("a_mat", a), ("b_vec", b), ("c_vec", c)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def nx(self) -> int:
        return self.a_mat.shape[0]

    @property
    def spectral_radius(self) -> float:
        return spectral_radius(self.a_mat)

    def is_stable(self) -> bool:
        return self.spectral_radius < 1.0

    def is_minimal(self, rank_tol: float | None = None) -> bool:
        n = self.nx
        return (nk.numerical_rank(controllability(self), rank_tol) == n
                and nk.numerical_rank(observability(self.a_mat, self.c_vec, n), rank_tol) == n)

    def similar(self, t) -> "StateSpaceModel":
        """Return ``(T^-1 A T, T^-1 B, C T)``."""
        t = nk.as_matrix(t, "T")
        ti = np.linalg.inv(t)
        return StateSpaceModel(ti @ self.a_mat @ t, ti @ self.b_vec, self.c_vec @ t)

    def to_dict(self) -> dict:
        return {
            "nx": self.nx,
            "A": self.a_mat.tolist(),
            "B": self.b_vec.tolist(),
            "C": self.c_vec.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StateSpaceModel":
        model = cls(np.array(d["A"], dtype=float), np.array(d["B"], dtype=float),
                    np.array(d["C"], dtype=float))
        if "nx" in d and int(d["nx"]) != model.nx:
            raise DimensionError(f"declared nx={d['nx']} but A is {model.nx}x{model.nx}")
        return model

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "StateSpaceModel":
        return cls.from_dict(json.loads(text))


def jordan_test_system(lam: float, delta: float) -> StateSpaceModel:
    """Two-state Jordan-type test system ``A = [[lam, delta], [0, lam]]``, B = e2, C = e1."""
    return StateSpaceModel(np.array([[lam, delta], [0.0, lam]]),
                           np.array([[0.0], [1.0]]), np.array([[1.0, 0.0]]))


def system1() -> StateSpaceModel:
    return jordan_test_system(0.1, 2.0)


def system2() -> StateSpaceModel:
    return jordan_test_system(0.9, 10.0)


def spectral_radius(a) -> float:
    a = nk.as_matrix(a, "A")
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def observability(a_mat, c_vec, rows: int) -> np.ndarray:
    """Stack ``C A^i`` for ``i = 0 .. rows-1``."""
    a = nk.as_matrix(a_mat, "A")
    row = np.array(c_vec, dtype=float).reshape(1, -1)
    out = np.empty((rows, a.shape[0]))
    for i in range(rows):
        out[i] = row
        row = row @ a
    return out


def controllability(model: StateSpaceModel, cols: int | None = None) -> np.ndarray:
    """Stack ``A^i B`` for ``i = 0 .. cols-1`` (default nx columns)."""
    cols = model.nx if cols is None else cols
    col = model.b_vec
    out = np.empty((model.nx, cols))
    for i in range(cols):
        out[:, i] = col[:, 0]
        col = model.a_mat @ col
    return out


def markov(model: StateSpaceModel, n: int) -> np.ndarray:
    """First ``n`` Markov parameters ``g_i = C A^i B`` by state propagation."""
    if n < 1:
        raise ValueError("n must be at least 1")
    x = model.b_vec[:, 0].copy()
    c = model.c_vec[0]
    g = np.empty(n)
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n):
            g[i] = c @ x
            x = model.a_mat @ x
    return g


def char_poly_of(model) -> np.ndarray:
    """Characteristic coefficients ``[a_nx, ..., a_1]`` of ``det(zI - A)``.

    Uses the Faddeev-LeVerrier recurrence, so it shares no code path with
    the SVD-based estimators it is used to check.
    """
    a = nk.as_matrix(model.a_mat if isinstance(model, StateSpaceModel) else model, "A")
    n = a.shape[0]
    if a.shape != (n, n):
        raise DimensionError(f"A must be square, got {a.shape}")
    eye = np.eye(n)
    m = np.zeros((n, n))
    c = 1.0
    coeffs = []  # a_1, a_2, ..., a_n
    for k in range(1, n + 1):
        m = a @ m + c * eye
        c = -np.trace(a @ m) / k
        coeffs.append(c)
    return np.array(coeffs[::-1])


def observer_canonical(a) -> tuple[np.ndarray, np.ndarray]:
    """Observer canonical pair ``(A, C)`` for coefficients ``[a_nx, ..., a_1]``."""
    a = np.asarray(a, dtype=float).ravel()
    nx = a.size
    a_mat = np.zeros((nx, nx))
    a_mat[:, 0] = -a[::-1]
    a_mat[np.arange(nx - 1), np.arange(1, nx)] = 1.0
    c_vec = np.zeros((1, nx))
    c_vec[0, 0] = 1.0
    return a_mat, c_vec


def recover_b(a, g, rank_tol: float | None = None) -> np.ndarray:
    """Least-squares input vector for the observer canonical pair of ``a``.

    Solves ``O_{n-1} B = [g_0, ..., g_{n-1}]^T`` with the pseudo-inverse of
    the extended observability matrix of the canonical pair.
    """
    a = np.asarray(a, dtype=float).ravel()
    g = np.asarray(g, dtype=float).ravel()
    nx = a.size
    if g.size < nx:
        raise DimensionError(f"need at least nx={nx} Markov parameters, got {g.size}")
    a_mat, c_vec = observer_canonical(a)
    with np.errstate(over="ignore", invalid="ignore"):
        obs = observability(a_mat, c_vec, g.size)
    if not np.all(np.isfinite(obs)):
        raise RankError("observability matrix overflowed; estimated A is violently unstable")
    if nk.numerical_rank(obs, rank_tol) < nx:
        raise RankError("extended observability matrix of the canonical pair is rank deficient")
    return nk.pinv(obs, rank_tol) @ g.reshape(-1, 1)


def assemble_observer_model(a, g) -> StateSpaceModel:
    a_mat, c_vec = observer_canonical(a)
    return StateSpaceModel(a_mat, recover_b(a, g), c_vec)


def fit_score(g_hat, g_true) -> float:
    """FIT = 100 (1 - ||g_true - g_hat|| / ||g_true - mean(g_true)||)."""
    g_hat = np.asarray(g_hat, dtype=float).ravel()
    g_true = np.asarray(g_true, dtype=float).ravel()
    if g_hat.shape != g_true.shape:
        raise DimensionError(f"length mismatch {g_hat.size} vs {g_true.size}")
    ref = np.linalg.norm(g_true - g_true.mean())
    if ref == 0.0:
        raise DegenerateReferenceError("reference impulse response is constant")
    with np.errstate(over="ignore", invalid="ignore"):
        err = np.linalg.norm(g_true - g_hat)
    if not np.isfinite(err):
        return -np.inf
    return float(100.0 * (1.0 - err / ref))


def fit(model_hat: StateSpaceModel, model_true: StateSpaceModel, horizon: int = FIT_HORIZON) -> float:
    return fit_score(markov(model_hat, horizon), markov(model_true, horizon))


def _random_spectrum(nx: int, rho_max: float, rng: np.random.Generator) -> np.ndarray:
    """Real block-diagonal matrix whose eigenvalue magnitudes are U(0, rho_max)."""
    d = np.zeros((nx, nx))
    i = 0
    while i < nx:
        r = rng.uniform(0.0, rho_max)
        if i + 1 < nx and rng.random() < 0.5:
            theta = rng.uniform(0.0, np.pi)
            cs, sn = r * np.cos(theta), r * np.sin(theta)
            d[i:i + 2, i:i + 2] = [[cs, sn], [-sn, cs]]
            i += 2
        else:
            d[i, i] = r if rng.random() < 0.5 else -r
            i += 1
    return d


def _random_orthogonal(nx: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((nx, nx)))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def random_stable_system(nx: int, rho_min: float, rho_max: float, rng=None,
                         max_draws: int = 10_000) -> StateSpaceModel:
    """Draw a stable, minimal SISO system with dominant pole magnitude in a window.

    Eigenvalue magnitudes are i.i.d. uniform on (0, rho_max) with random real
    or complex-pair structure, rotated by a random orthogonal similarity.
    Draws are rejected until the largest magnitude lies in
    ``[rho_min, rho_max]`` and the triple is minimal. ``B`` is ``5 * randn``,
    ``C`` is ``randn``.

    Parameters
    ----------
    rng : numpy.random.Generator or int or None
        Random stream; an int is used as a seed.
    """
    if not 0.0 <= rho_min < rho_max < 1.0:
        raise ValueError(f"need 0 <= rho_min < rho_max < 1, got ({rho_min}, {rho_max})")
    if nx < 1:
        raise ValueError("nx must be positive")
    rng = np.random.default_rng(rng)
    for _ in range(max_draws):
        d = _random_spectrum(nx, rho_max, rng)
        q = _random_orthogonal(nx, rng)
        b = 5.0 * rng.standard_normal((nx, 1))
        c = rng.standard_normal((1, nx))
        a = q @ d @ q.T
        rho = spectral_radius(a)
        if not rho_min <= rho <= rho_max:
            continue
        model = StateSpaceModel(a, b, c)
        if model.is_minimal():
            return model
    raise SamplingError(f"no admissible system in {max_draws} draws "
                        f"(nx={nx}, window=[{rho_min}, {rho_max}])")


def phi_constant(model, tau_max: int = 500) -> float:
    """Transient-growth constant ``max_tau ||A^tau|| / rho(A)^(tau/2)``.

    The supremum over all ``tau >= 0`` is truncated at ``tau_max``; a warning
    is issued when the running maximum still grew in the last tenth of the
    range.
    """
    a = nk.as_matrix(model.a_mat if isinstance(model, StateSpaceModel) else model, "A")
    rho = spectral_radius(a)
    if rho >= 1.0:
        raise InstabilityError(f"phi_constant needs rho(A) < 1, got {rho:.6g}")
    best = 1.0  # tau = 0
    best_tau = 0
    power = np.eye(a.shape[0])
    for tau in range(1, tau_max + 1):
        power = power @ a
        norm = nk.spectral_norm(power)
        if norm == 0.0:
            break
        if rho == 0.0:
            return np.inf
        ratio = norm / rho ** (tau / 2.0)
        if ratio > best:
            best, best_tau = ratio, tau
    if best_tau > 0.9 * tau_max:
        warnings.warn(f"phi_constant still increasing near tau_max={tau_max}", RuntimeWarning,
                      stacklevel=2)
    return float(best)
