"""
Least-squares realizers for the characteristic polynomial.

Every estimator returns the coefficient row ``a = [a_nx, ..., a_1]`` that
makes ``[a, 1]`` an (approximate) left null vector of the Hankel matrix.

* OLS treats the last Hankel row as the only noisy part (null-space route).
* TLS perturbs the whole Hankel matrix (range-space / SVD route).
* WLS reweights the residual ``[a, 1] H`` by its covariance.
* KUNG is the balanced SVD realization; its A matrix is similar to the TLS
  observer-canonical one.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import numkernel as nk
from .errors import (
    DimensionError,
    IllConditionedError,
    InsolubleTLSError,
    NongenericTLSError,
    RankError,
    WeightingSingularError,
)
from .hankel import HankelSet, build_hankel, toeplitz_t
from .model import StateSpaceModel, assemble_observer_model, char_poly_of

log = logging.getLogger(__name__)

METHODS = ("OLS", "TLS", "WLS", "KUNG")

# relative gap below which the TLS solution is considered meaningless
TLS_GAP_TOL = 1e-8


@dataclass
class RealizationResult:
    method: str
    a_hat: np.ndarray
    model: StateSpaceModel
    residual_norm: float
    iterations: int = 0
    converged: bool = True
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "a_hat": [float(v) for v in self.a_hat],
            "model": self.model.to_dict(),
            "residual_norm": float(self.residual_norm),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "details": {k: (v if isinstance(v, (str, int)) else float(v))
                        for k, v in self.details.items()},
        }


@dataclass
class WlsConfig:
    """Settings for the iterated WLS estimator.

    ``p_g`` is the covariance of the Markov estimates (identity when None).
    ``init`` picks the first-step estimator; None means TLS when its
    preconditions hold and OLS otherwise.
    """

    p_g: Optional[np.ndarray] = None
    max_iters: int = 5
    tol: float = 1e-10
    init: Optional[str] = None


def residual_norm(h: HankelSet, a) -> float:
    """``||H^- + a H^+||`` for the f = nx partition."""
    a = np.asarray(a, dtype=float).reshape(1, -1)
    return nk.spectral_norm(h.h_minus + a @ h.h_plus)


def _require_f_eq_nx(h: HankelSet, who: str):
    if h.f != h.nx:
        raise DimensionError(f"{who} needs f = nx (got f={h.f}, nx={h.nx})")


def _check_plus_rank(h: HankelSet, rank_tol: float | None = None):
    s = h.sigma_plus
    tol = nk.default_rank_tol(h.h_plus.shape) if rank_tol is None else rank_tol
    if s[0] == 0.0 or s[h.nx - 1] <= tol * s[0]:
        raise IllConditionedError(
            f"H+ is rank deficient: sigma+_nx = {s[h.nx - 1]:.3e}", sigma=float(s[h.nx - 1]))


def _lstsq_rows(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Solve ``min ||a x - y||`` for a row ``a`` via QR of ``x^T``."""
    q, r = np.linalg.qr(x.T)
    return np.linalg.solve(r, q.T @ y.T).ravel()


def ols_coeffs(h: HankelSet) -> np.ndarray:
    """OLS ``min ||H^- + a H^+||`` solved through a QR factorization of ``H+^T``."""
    _require_f_eq_nx(h, "OLS")
    _check_plus_rank(h)
    return -_lstsq_rows(h.h_plus, h.h_minus)


def ols_coeffs_normal(h: HankelSet) -> np.ndarray:
    """Normal-equation OLS: ``a = -H^- H+^T (H+ H+^T)^-1``."""
    _require_f_eq_nx(h, "OLS")
    _check_plus_rank(h)
    hp, hm = h.h_plus, h.h_minus
    return -np.linalg.solve(hp @ hp.T, hp @ hm.T).ravel()


def ols_coeffs_min_norm(h: HankelSet) -> np.ndarray:
    """OLS as the minimum-norm solution of ``a H^+ = -H^- P_rows(H^+)`` from the SVD of H+."""
    _require_f_eq_nx(h, "OLS")
    _check_plus_rank(h)
    nx = h.nx
    u, s, vt = h.svd_plus
    v1 = vt[:nx].T
    projected = h.h_minus @ v1 @ v1.T
    # minimum-norm solution: a = -projected V1 S1^-1 U1^T
    return -((projected @ v1) / s[:nx] @ u[:, :nx].T).ravel()


def tls_gap(h: HankelSet) -> float:
    """``sigma+_nx - sigma_{nx+1}``."""
    s_full = np.append(h.sigma, 0.0)
    return float(h.sigma_plus[h.nx - 1] - s_full[h.nx])


def _check_tls(h: HankelSet):
    gap = tls_gap(h)
    if gap <= TLS_GAP_TOL * h.sigma[0]:
        raise InsolubleTLSError(
            f"TLS gap sigma+_nx - sigma_nx+1 = {gap:.3e} below tolerance "
            f"{TLS_GAP_TOL:g} * sigma_1", gap=gap)


def tls_coeffs(h: HankelSet) -> np.ndarray:
    """TLS from the last left singular vector of the full Hankel matrix."""
    _require_f_eq_nx(h, "TLS")
    _check_tls(h)
    u_last = h.svd_full.u[:, h.nx]
    if abs(u_last[-1]) < TLS_GAP_TOL:
        raise NongenericTLSError(f"last entry of u_(nx+1) is {u_last[-1]:.3e}")
    return u_last[:-1] / u_last[-1]


def tls_coeffs_corrected(h: HankelSet) -> np.ndarray:
    """TLS through the corrected normal equations ``(H+H+^T - s^2 I)``."""
    _require_f_eq_nx(h, "TLS")
    _check_tls(h)
    hp, hm = h.h_plus, h.h_minus
    s2 = np.append(h.sigma, 0.0)[h.nx] ** 2
    return -np.linalg.solve(hp @ hp.T - s2 * np.eye(h.nx), hp @ hm.T).ravel()


def tls_ols_difference(h: HankelSet, a_ols=None) -> np.ndarray:
    """Predicted ``a_tls - a_ols`` from the OLS solution alone.

    Substituting ``H^- H+^T = -a_ols H+H+^T`` into the corrected normal
    equations gives ``+s^2 a_ols (H+H+^T - s^2 I)^-1`` with
    ``s = sigma_{nx+1}``.
    """
    _require_f_eq_nx(h, "TLS")
    _check_tls(h)
    a_ols = ols_coeffs(h) if a_ols is None else np.asarray(a_ols, dtype=float)
    hp = h.h_plus
    s2 = np.append(h.sigma, 0.0)[h.nx] ** 2
    m = hp @ hp.T - s2 * np.eye(h.nx)
    return s2 * np.linalg.solve(m.T, a_ols)


def _result(method, h, a, **kw) -> RealizationResult:
    model = assemble_observer_model(a, h.g)
    return RealizationResult(method=method, a_hat=np.asarray(a, dtype=float), model=model,
                             residual_norm=residual_norm(h, a) if h.f == h.nx else np.nan, **kw)


def ols_realize(h: HankelSet) -> RealizationResult:
    """Null-space realization: OLS coefficients on observer canonical form."""
    return _result("OLS", h, ols_coeffs(h))


def tls_realize(h: HankelSet) -> RealizationResult:
    """Range-space realization solved as TLS, on observer canonical form.

    The singular-vector solution is returned; the corrected normal-equation
    form is evaluated alongside and its deviation stored in ``details``.
    """
    a = tls_coeffs(h)
    a_check = tls_coeffs_corrected(h)
    dev = float(np.max(np.abs(a - a_check)) / max(1.0, np.max(np.abs(a))))
    if dev > 1e-6:
        log.info("TLS singular-vector and normal-equation forms differ by %.2e", dev)
    return _result("TLS", h, a, details={"normal_equation_deviation": dev})


def tls_coeffs_general_f(h: HankelSet) -> np.ndarray:
    """TLS coefficients for ``f > nx`` from the partitioned left singular vectors.

    The rows of ``[(U12 U22^-1)^T, I]`` span the estimated left null space;
    the row whose trailing block is ``[1, 0, ..., 0]`` has the banded
    Toeplitz leading structure ``[a, 1, 0, ..., 0]`` and yields ``a``.
    """
    nx = h.nx
    u = h.svd_full.u
    u12 = u[:nx, nx:]
    u22 = u[nx:, nx:]
    s22 = nk.singular_values(u22)
    if s22[-1] <= TLS_GAP_TOL * max(s22[0], 1.0):
        raise NongenericTLSError(f"U22 is singular (smallest singular value {s22[-1]:.3e})")
    gap = float(h.sigma[nx - 1] - (h.sigma[nx] if h.sigma.size > nx else 0.0))
    if gap <= TLS_GAP_TOL * h.sigma[0]:
        raise InsolubleTLSError(f"TLS gap sigma_nx - sigma_nx+1 = {gap:.3e} too small", gap=gap)
    x = np.linalg.solve(u22.T, u12.T)  # (U12 U22^-1)^T, shape (f+1-nx) x nx
    return x[0]


def tls_realize_general_f(h: HankelSet) -> RealizationResult:
    if h.f == h.nx:
        return tls_realize(h)
    a = tls_coeffs_general_f(h)
    h_nx = build_hankel(h.g, h.nx)
    res = _result("TLS", h_nx, a)
    res.details["f"] = h.f
    return res


def kung_realize(h: HankelSet) -> RealizationResult:
    """Balanced realization from the rank-nx truncated SVD of the Hankel matrix."""
    nx, f = h.nx, h.f
    u, s, vt = h.svd_full
    tol = nk.default_rank_tol(h.h.shape)
    if s[0] == 0.0 or s[nx - 1] <= tol * s[0]:
        raise RankError(f"Hankel rank collapsed: sigma_nx = {s[nx - 1]:.3e}")
    root = np.sqrt(s[:nx])
    obs = u[:, :nx] * root
    ctrb = root[:, None] * vt[:nx]
    a_r = nk.pinv(obs[:f]) @ obs[1:]
    model = StateSpaceModel(a_r, ctrb[:, :1], obs[:1])
    a = char_poly_of(a_r)
    h_nx = h if f == nx else build_hankel(h.g, nx)
    return RealizationResult("KUNG", a, model, residual_norm(h_nx, a))


def wls_weighting(a, p_g) -> np.ndarray:
    """Residual covariance ``T(a)^T P_g T(a)`` (its inverse is the WLS weight)."""
    p_g = nk.as_matrix(p_g, "P_g")
    t = toeplitz_t(a, p_g.shape[0])
    return t.T @ p_g @ t


def wls_step(h: HankelSet, weight_inv: np.ndarray) -> np.ndarray:
    """One WLS solve with weight ``W = weight_inv^-1``.

    ``a = -H^- W H+^T (H+ W H+^T)^-1``; passing the identity gives OLS.
    """
    hp, hm = h.h_plus, h.h_minus
    try:
        cond = np.linalg.cond(weight_inv)
        if not np.isfinite(cond) or cond > 1e14:
            raise WeightingSingularError(f"weighting matrix is singular (cond={cond:.3e})")
        # whiten with the Cholesky factor of W^-1 and solve an ordinary LS problem
        chol = np.linalg.cholesky(0.5 * (weight_inv + weight_inv.T))
    except np.linalg.LinAlgError as exc:
        raise WeightingSingularError(f"weighting matrix is not positive definite: {exc}") from exc
    xw = np.linalg.solve(chol, hp.T).T
    yw = np.linalg.solve(chol, hm.T).T
    if nk.numerical_rank(xw) < h.nx:
        raise IllConditionedError("H+ W H+^T is singular")
    return -_lstsq_rows(xw, yw)


def _initial(h: HankelSet, init: str | None) -> tuple[str, np.ndarray]:
    if init is None:
        try:
            return "TLS", tls_coeffs(h)
        except (InsolubleTLSError, NongenericTLSError):
            return "OLS", ols_coeffs(h)
    init = init.upper()
    if init == "TLS":
        return init, tls_coeffs(h)
    if init == "OLS":
        return init, ols_coeffs(h)
    raise ValueError(f"unknown WLS init {init!r}")


def wls_realize(h: HankelSet, cfg: WlsConfig | None = None) -> RealizationResult:
    """Iterated weighted null-space fit.

    Starting from an OLS or TLS estimate, repeatedly solves the WLS problem
    with the optimal weight evaluated at the current estimate. Stops when the
    coefficient update falls below ``cfg.tol`` or after ``cfg.max_iters``
    steps; in the latter case the result is flagged ``converged=False``.
    """
    _require_f_eq_nx(h, "WLS")
    cfg = cfg or WlsConfig()
    p_g = np.eye(h.n) if cfg.p_g is None else nk.as_matrix(cfg.p_g, "P_g")
    if p_g.shape != (h.n, h.n):
        raise DimensionError(f"P_g must be {h.n}x{h.n}, got {p_g.shape}")
    init_name, a = _initial(h, cfg.init)
    converged = False
    iters = 0
    for iters in range(1, cfg.max_iters + 1):
        a_new = wls_step(h, wls_weighting(a, p_g))
        step = float(np.linalg.norm(a_new - a))
        a = a_new
        if step <= cfg.tol:
            converged = True
            break
    if not converged:
        log.debug("WLS stopped after %d iterations without meeting tol", iters)
    return _result("WLS", h, a, iterations=iters, converged=converged,
                   details={"init": init_name})


def realize(h: HankelSet, method: str, wls: WlsConfig | None = None) -> RealizationResult:
    """Dispatch on method name (``OLS``, ``TLS``, ``WLS`` or ``KUNG``)."""
    method = method.upper()
    if method == "OLS":
        return ols_realize(h)
    if method == "TLS":
        return tls_realize_general_f(h) if h.f > h.nx else tls_realize(h)
    if method == "WLS":
        return wls_realize(h, wls)
    if method == "KUNG":
        return kung_realize(h)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
