"""
Sensitivity and statistical diagnostics for the realization estimators.

The central scalars are the ratio ``kappa = sigma_nx / sigma+_nx`` between
the nx-th singular values of the full Hankel matrix and of its upper block,
and the TLS gap ``delta = sigma+_nx - sigma_{nx+1}``.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import numkernel as nk
from .errors import RankError, RealizerError, WeightingSingularError
from .estimators import (
    WlsConfig,
    ols_coeffs,
    realize,
    residual_norm,
    tls_coeffs,
)
from .hankel import HankelSet, build_hankel, extended_row, toeplitz_t
from .model import StateSpaceModel, char_poly_of, markov, phi_constant

log = logging.getLogger(__name__)


@dataclass
class DiagnosticsReport:
    kappa: float
    delta: float
    sigma_full: np.ndarray
    sigma_plus: np.ndarray
    lemma3_upper: Optional[float] = None
    sin_theta_tls: Optional[float] = None
    sin_theta_ols: Optional[float] = None

    def to_dict(self) -> dict:
        out = {
            "kappa": float(self.kappa),
            "delta": float(self.delta),
            "sigma_full": [float(v) for v in self.sigma_full],
            "sigma_plus": [float(v) for v in self.sigma_plus],
        }
        for key in ("lemma3_upper", "sin_theta_tls", "sin_theta_ols"):
            val = getattr(self, key)
            if val is not None:
                out[key] = float(val)
        return out


def kappa(h: HankelSet) -> float:
    return float(h.sigma[h.nx - 1] / h.sigma_plus[h.nx - 1])


def delta(h: HankelSet) -> float:
    s_next = h.sigma[h.nx] if h.sigma.size > h.nx else 0.0
    return float(h.sigma_plus[h.nx - 1] - s_next)


def true_hankel(truth: StateSpaceModel, like: HankelSet) -> HankelSet:
    return build_hankel(markov(truth, like.n), like.nx, like.f)


def lemma3_upper(truth: StateSpaceModel, h_hat: HankelSet, h_true: HankelSet | None = None) -> float:
    """``Phi(A)^2 ||C|| ||B|| (1 - rho^(n-nx)) / (1 - rho) + ||H+ perturbation||``."""
    h_true = h_true or true_hankel(truth, h_hat)
    rho = truth.spectral_radius
    phi = phi_constant(truth)
    geom = (1.0 - rho ** (h_hat.n - h_hat.nx)) / (1.0 - rho)
    return float(phi ** 2 * nk.spectral_norm(truth.c_vec) * nk.spectral_norm(truth.b_vec) * geom
                 + nk.spectral_norm(h_hat.h_plus - h_true.h_plus))


def sensitivity_report(h: HankelSet, truth: StateSpaceModel | None = None) -> DiagnosticsReport:
    """kappa, delta and singular values; with ``truth``, also the bound and sin-theta terms."""
    rep = DiagnosticsReport(kappa=kappa(h), delta=delta(h),
                            sigma_full=h.sigma.copy(), sigma_plus=h.sigma_plus.copy())
    if truth is not None:
        h_true = true_hankel(truth, h)
        rep.lemma3_upper = lemma3_upper(truth, h, h_true)
        try:
            dist = sin_theta_distances(h, h_true, ols_coeffs(h), tls_coeffs(h),
                                       a_true=char_poly_of(truth))
            rep.sin_theta_tls = dist.tls_range
            rep.sin_theta_ols = dist.ols_range
        except RealizerError as exc:
            log.info("sin-theta distances unavailable: %s", exc)
    return rep


class SinThetaDistances(NamedTuple):
    """Distances of the TLS/OLS left null spaces from the true one.

    ``*_error`` is the normalized coefficient error ``||a_hat - a|| / ||[a, 1]||``;
    ``*_null`` and ``*_range`` are projector distances between the left null
    spaces and between the range spaces of the rank-nx approximants and the
    true Hankel matrix; ``*_bound`` are the perturbation bounds.
    """

    tls_error: float
    ols_error: float
    tls_null: float
    ols_null: float
    tls_range: float
    ols_range: float
    tls_bound: float
    ols_bound: float


def _null_projector(a) -> np.ndarray:
    x = extended_row(a)[:, None]
    return x @ x.T / float(x[:, 0] @ x[:, 0])


def _rank_range_projector(m: np.ndarray, r: int) -> np.ndarray:
    f = nk.svd(m)
    if f.s[r - 1] <= nk.default_rank_tol(m.shape) * f.s[0]:
        raise RankError("approximant lost rank; projector ill-defined")
    u1 = f.u[:, :r]
    return u1 @ u1.T


def tls_approximant(h: HankelSet) -> np.ndarray:
    """Rank-nx truncated SVD of the Hankel matrix."""
    u, s, vt = h.svd_full
    r = h.nx
    return (u[:, :r] * s[:r]) @ vt[:r]


def ols_approximant(h: HankelSet) -> np.ndarray:
    """``[H+; H- P]`` with ``P`` the projector onto the row space of ``H+``."""
    v1 = h.svd_plus.vt[:h.nx].T
    return np.vstack([h.h_plus, h.h_minus @ v1 @ v1.T])


def sin_theta_distances(h_hat: HankelSet, h_true: HankelSet, a_ols, a_tls,
                        a_true=None) -> SinThetaDistances:
    """Error distances of the OLS and TLS solutions from the true coefficients."""
    if h_hat.h.shape != h_true.h.shape:
        raise ValueError("estimated and true Hankel matrices differ in shape")
    nx = h_hat.nx
    a_true = ols_coeffs(h_true) if a_true is None else np.asarray(a_true, dtype=float)
    norm_true = np.linalg.norm(extended_row(a_true))
    p_null_true = _null_projector(a_true)
    p_range_true = _rank_range_projector(h_true.h, nx)
    tilde = h_hat.h - h_true.h

    def dists(a_hat, approx):
        err = float(np.linalg.norm(np.asarray(a_hat) - a_true) / norm_true)
        null = nk.op_norm_diff(_null_projector(a_hat), p_null_true)
        rng = nk.op_norm_diff(_rank_range_projector(approx, nx), p_range_true)
        return err, null, rng

    te, tn, tr = dists(a_tls, tls_approximant(h_hat))
    oe, on, orr = dists(a_ols, ols_approximant(h_hat))
    return SinThetaDistances(
        tls_error=te, ols_error=oe, tls_null=tn, ols_null=on, tls_range=tr, ols_range=orr,
        tls_bound=nk.spectral_norm(tilde) / h_hat.sigma[nx - 1],
        ols_bound=nk.spectral_norm(tilde[:nx]) / h_hat.sigma_plus[nx - 1],
    )


class Check(NamedTuple):
    """One inequality (``lhs <= rhs``) or equality (``lhs == rhs``) instance."""

    name: str
    lhs: float
    rhs: float
    kind: str  # "le" or "eq"

    def violation(self, slack: float = 1e-9) -> float:
        scale = max(1.0, abs(self.lhs), abs(self.rhs))
        if self.kind == "le":
            return max(0.0, (self.lhs - self.rhs) / scale - slack)
        return max(0.0, abs(self.lhs - self.rhs) / scale - slack)

    def holds(self, slack: float = 1e-9) -> bool:
        return self.violation(slack) == 0.0


def lemma_checks(h_hat: HankelSet, truth: StateSpaceModel | None = None) -> list[Check]:
    """All sensitivity inequalities that can be evaluated on one instance.

    Interlacing and the TLS/OLS gap bounds need only the noisy Hankel set;
    the sin-theta and singular-value upper bounds also need the true model.
    Checks whose preconditions fail (e.g. ``sigma+_nx <= sigma_{nx+1}``) are
    omitted.
    """
    nx = h_hat.nx
    s = np.append(h_hat.sigma, 0.0)
    sp = h_hat.sigma_plus
    out = []
    for i in range(nx):
        out.append(Check(f"interlace_upper[{i}]", sp[i], s[i], "le"))
        out.append(Check(f"interlace_lower[{i}]", s[i + 1], sp[i], "le"))
    dlt = delta(h_hat)
    out.append(Check("kappa_ge_1", 1.0, kappa(h_hat), "le"))
    out.append(Check("delta_ge_0", 0.0, dlt, "le"))
    out.append(Check("delta_le_sigma_plus", dlt, sp[nx - 1], "le"))
    a_ols = a_tls = None
    if dlt > 0:
        try:
            a_ols = ols_coeffs(h_hat)
            a_tls = tls_coeffs(h_hat)
        except RealizerError:
            a_ols = a_tls = None
        if a_ols is not None:
            hm_norm = nk.spectral_norm(h_hat.h_minus)
            rho_ols = residual_norm(h_hat, a_ols)
            rho_tls = residual_norm(h_hat, a_tls)
            s_next = s[nx]
            out.append(Check("lemma1_coeff_gap", float(np.linalg.norm(a_tls - a_ols)),
                             hm_norm * rho_ols / (sp[nx - 1] ** 2 - s_next ** 2), "le"))
            out.append(Check("lemma1_residual", rho_tls, rho_ols * (1 + hm_norm / dlt), "le"))
            v_nx = h_hat.svd_plus.vt[nx - 1]
            a_norm = float(np.linalg.norm(a_tls))
            out.append(Check("lemma2_lower", nk.spectral_norm(h_hat.h_minus @ v_nx[:, None]) / (2 * dlt),
                             a_norm, "le"))
            out.append(Check("lemma2_upper", a_norm, hm_norm / dlt, "le"))
    if truth is not None:
        out.append(Check("lemma3_upper", sp[nx - 1], lemma3_upper(truth, h_hat), "le"))
        if dlt > 0 and a_ols is not None:
            h_true = true_hankel(truth, h_hat)
            d = sin_theta_distances(h_hat, h_true, a_ols, a_tls, a_true=char_poly_of(truth))
            out.append(Check("lemma0_tls_null_eq_range", d.tls_null, d.tls_range, "eq"))
            out.append(Check("lemma0_ols_null_eq_range", d.ols_null, d.ols_range, "eq"))
            out.append(Check("lemma0_tls_bound", d.tls_range, d.tls_bound, "le"))
            out.append(Check("lemma0_ols_bound", d.ols_range, d.ols_bound, "le"))
    return out


def lemma0_error_checks(h_hat: HankelSet, truth: StateSpaceModel) -> list[Check]:
    """Equalities between the normalized coefficient error and the projector distance."""
    h_true = true_hankel(truth, h_hat)
    d = sin_theta_distances(h_hat, h_true, ols_coeffs(h_hat), tls_coeffs(h_hat),
                            a_true=char_poly_of(truth))
    return [Check("lemma0_tls_error_eq_null", d.tls_error, d.tls_null, "eq"),
            Check("lemma0_ols_error_eq_null", d.ols_error, d.ols_null, "eq")]


@dataclass
class AsymptoticCovariances:
    p_ols: np.ndarray
    p_wls: np.ndarray
    min_eig_diff: float

    def to_dict(self) -> dict:
        return {"p_ols": self.p_ols.tolist(), "p_wls": self.p_wls.tolist(),
                "min_eig_diff": float(self.min_eig_diff)}


def covariance_formulas(h_plus: np.ndarray, resid_cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """OLS and WLS asymptotic covariances from ``H+`` and the residual covariance ``W^-1``.

    ``P_ols = pinv(H+)^T W^-1 pinv(H+)`` and ``P_wls = (H+ W H+^T)^-1``.
    """
    hp_pinv = nk.pinv(h_plus)
    p_ols = hp_pinv.T @ resid_cov @ hp_pinv
    try:
        w_hp = np.linalg.solve(resid_cov, h_plus.T)
    except np.linalg.LinAlgError as exc:
        raise WeightingSingularError(f"residual covariance is singular: {exc}") from exc
    p_wls = np.linalg.inv(h_plus @ w_hp)
    return 0.5 * (p_ols + p_ols.T), 0.5 * (p_wls + p_wls.T)


def asymptotic_covariances(h_true: HankelSet, a_true, p_g) -> AsymptoticCovariances:
    p_g = nk.as_matrix(p_g, "P_g")
    if p_g.shape != (h_true.n, h_true.n):
        raise ValueError(f"P_g must be {h_true.n}x{h_true.n}")
    t = toeplitz_t(a_true, h_true.n)
    resid_cov = t.T @ p_g @ t
    if np.linalg.cond(resid_cov) > 1e14:
        raise WeightingSingularError("T^T P_g T is singular")
    p_ols, p_wls = covariance_formulas(h_true.h_plus, resid_cov)
    w, _ = nk.sym_eig(p_ols - p_wls)
    return AsymptoticCovariances(p_ols, p_wls, float(w[0]))


def _threads(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("REALIZER_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _normality_trial(h_args, g, chol, scale, methods, wls_cfg, seed_key):
    rng = np.random.default_rng(seed_key)
    e = chol @ rng.standard_normal(g.size)
    h = build_hankel(g + scale * e, *h_args)
    out = {}
    for m in methods:
        try:
            out[m] = realize(h, m, wls_cfg).a_hat
        except RealizerError:
            out[m] = None
    return out


def normality_check(model: StateSpaceModel, p_g, n: int, noise_scales, trials: int, seed: int,
                    methods=("OLS", "TLS", "WLS"), threads: int | None = None) -> list[dict]:
    """Compare Monte Carlo covariances of ``(a_hat - a) / s`` with the asymptotic formulas.

    For each noise scale ``s`` the Markov estimates are ``g + s e`` with
    ``e ~ N(0, P_g)``. One row per (scale, method) is returned with the
    relative Frobenius distance to the formula (OLS and TLS against
    ``P_ols``, WLS against ``P_wls``) and, for TLS, the relative distance
    between the TLS and OLS sample covariances. Estimator failures are
    counted and excluded.
    """
    if trials < 100:
        raise ValueError("trials must be at least 100 for a meaningful sample covariance")
    nx = model.nx
    g = markov(model, n)
    p_g = nk.as_matrix(p_g, "P_g")
    a_true = char_poly_of(model)
    cov = asymptotic_covariances(build_hankel(g, nx), a_true, p_g)
    w, q = nk.sym_eig(p_g)
    chol = q * np.sqrt(np.clip(w, 0.0, None))
    wls_cfg = WlsConfig(p_g=p_g)
    target = {"OLS": cov.p_ols, "TLS": cov.p_ols, "WLS": cov.p_wls}
    rows = []
    workers = _threads(threads)
    for si, scale in enumerate(noise_scales):
        keys = [[int(seed), si, k] for k in range(trials)]
        args = ((nx,), g, chol, float(scale), tuple(methods), wls_cfg)
        if workers > 1:
            with ThreadPoolExecutor(workers) as ex:
                results = list(ex.map(lambda key: _normality_trial(*args, key), keys))
        else:
            results = [_normality_trial(*args, key) for key in keys]
        samples = {}
        for m in methods:
            devs = [r[m] - a_true for r in results if r[m] is not None]
            failures = trials - len(devs)
            devs = np.array(devs).reshape(-1, nx)
            if scale > 0:
                devs = devs / scale
            sample = np.cov(devs, rowvar=False).reshape(nx, nx) if len(devs) > 1 else np.full((nx, nx), np.nan)
            samples[m] = sample
            ref = target.get(m, cov.p_ols)
            rows.append({
                "scale": float(scale),
                "method": m,
                "trials": len(devs),
                "failures": failures,
                "sample_cov": sample.tolist(),
                "formula_cov": ref.tolist(),
                "rel_err": float(np.linalg.norm(sample - ref) / np.linalg.norm(ref)),
            })
        if "OLS" in samples and "TLS" in samples:
            rel = float(np.linalg.norm(samples["TLS"] - samples["OLS"]) / np.linalg.norm(cov.p_ols))
            for row in rows:
                if row["scale"] == float(scale) and row["method"] == "TLS":
                    row["ols_tls_rel"] = rel
    return rows
