"""
Monte Carlo harness for the realization studies.

A study is a list of groups. Each group either cycles over explicit systems
or draws a fresh random system per trial, adds i.i.d. Gaussian noise to the
exact Markov parameters, runs every requested estimator on the same noisy
sequence and scores the result with FIT.

Every trial draws from its own stream keyed by ``(seed, group, system,
candidate)``, so records do not depend on the number of worker threads.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .diagnostics import delta as hankel_delta
from .diagnostics import kappa as hankel_kappa
from .errors import RealizerError
from .estimators import METHODS, WlsConfig, realize
from .hankel import build_hankel
from .model import (
    FIT_HORIZON,
    StateSpaceModel,
    fit_score,
    markov,
    random_stable_system,
    system1,
    system2,
)

log = logging.getLogger(__name__)

CSV_FIELDS = ("trial", "system_id", "method", "fit", "kappa", "delta", "converged")


@dataclass(frozen=True)
class GeneratorSpec:
    nx: int
    rho_min: float
    rho_max: float


@dataclass
class ExperimentConfig:
    """One group of a study.

    Either ``systems`` (explicit ``(system_id, model)`` pairs, each run for
    ``trials`` trials) or ``generator`` (one fresh random system per trial)
    must be given. With ``kappa_window`` set, trials are drawn until
    ``trials`` of them have a noisy kappa strictly inside the window.
    """

    label: str
    n: int
    noise_std: float
    trials: int
    methods: tuple = ("OLS", "TLS")
    systems: Optional[list] = None
    generator: Optional[GeneratorSpec] = None
    kappa_window: Optional[tuple] = None
    fit_horizon: int = FIT_HORIZON
    wls_init: Optional[str] = None
    wls_iters: int = 5
    max_candidates: int = 500_000

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if (self.systems is None) == (self.generator is None):
            raise ValueError("give exactly one of systems / generator")
        bad = [m for m in self.methods if m.upper() not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}")
        self.methods = tuple(m.upper() for m in self.methods)

    @property
    def nx(self) -> int:
        if self.generator is not None:
            return self.generator.nx
        return self.systems[0][1].nx

    def to_dict(self) -> dict:
        d = {
            "label": self.label, "n": self.n, "noise_std": self.noise_std,
            "trials": self.trials, "methods": list(self.methods),
            "fit_horizon": self.fit_horizon, "wls_init": self.wls_init,
            "wls_iters": self.wls_iters,
            "kappa_window": list(self.kappa_window) if self.kappa_window else None,
        }
        if self.systems is not None:
            d["systems"] = {sid: m.to_dict() for sid, m in self.systems}
        else:
            g = self.generator
            d["generator"] = {"nx": g.nx, "rho_min": g.rho_min, "rho_max": g.rho_max}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        systems = generator = None
        if "systems" in d:
            systems = [(sid, StateSpaceModel.from_dict(m)) for sid, m in d["systems"].items()]
        if "generator" in d:
            generator = GeneratorSpec(**d["generator"])
        kw = dict(label=d.get("label", "custom"), n=int(d["n"]), noise_std=float(d["noise_std"]),
                  trials=int(d["trials"]), methods=tuple(d.get("methods", ("OLS", "TLS"))),
                  systems=systems, generator=generator,
                  fit_horizon=int(d.get("fit_horizon", FIT_HORIZON)),
                  wls_init=d.get("wls_init"), wls_iters=int(d.get("wls_iters", 5)))
        if d.get("kappa_window"):
            kw["kappa_window"] = tuple(d["kappa_window"])
        return cls(**kw)


@dataclass
class Study:
    name: str
    groups: list
    scatter: tuple = ("OLS", "TLS")
    note: str = ""

    def group(self, label: str) -> ExperimentConfig:
        for g in self.groups:
            if g.label == label:
                return g
        raise KeyError(label)

    def with_trials(self, trials: int) -> "Study":
        groups = [ExperimentConfig(**{**g.__dict__, "trials": trials}) for g in self.groups]
        return Study(self.name, groups, self.scatter, self.note)

    @classmethod
    def from_dict(cls, d: dict) -> "Study":
        groups = [ExperimentConfig.from_dict(g) for g in d["groups"]] if "groups" in d \
            else [ExperimentConfig.from_dict(d)]
        return cls(d.get("name", "custom"), groups, tuple(d.get("scatter", ("OLS", "TLS"))),
                   d.get("note", ""))


@dataclass
class TrialRecord:
    trial: int
    group: str
    system_id: str
    fits: dict
    a_hats: dict
    kappa: float
    delta: float
    failures: dict = field(default_factory=dict)
    converged: dict = field(default_factory=dict)


def _reference_systems():
    return [("system1", system1()), ("system2", system2())]


def preset(name: str) -> Study:
    """Named studies: ``exp1`` .. ``exp4``."""
    name = name.lower()
    if name == "exp1":
        return Study("exp1", [ExperimentConfig("exp1", n=20, noise_std=1.0, trials=200,
                                               methods=("OLS", "TLS"), systems=_reference_systems())],
                     scatter=("OLS", "TLS"))
    if name == "exp2":
        std = math.sqrt(0.5)
        windows = {"A": (1.0, 1.1), "B": (1.3, 1.4), "C": (1.6, 1.7)}
        groups = [ExperimentConfig(lbl, n=20, noise_std=std, trials=200, methods=("OLS", "TLS"),
                                   generator=GeneratorSpec(2, 0.78, 0.9), kappa_window=win)
                  for lbl, win in windows.items()]
        return Study("exp2", groups, scatter=("OLS", "TLS"))
    if name == "exp3":
        std = math.sqrt(0.5)
        rows = [("A1", 0.85, 0.95, 2, 20), ("A2", 0.55, 0.65, 2, 20), ("A3", 0.05, 0.15, 2, 20),
                ("B1", 0.78, 0.9, 2, 50), ("B2", 0.78, 0.9, 6, 50), ("B3", 0.78, 0.9, 10, 50)]
        groups = [ExperimentConfig(lbl, n=n, noise_std=std, trials=200, methods=("OLS", "TLS"),
                                   generator=GeneratorSpec(nx, lo, hi))
                  for lbl, lo, hi, nx, n in rows]
        return Study("exp3", groups, scatter=("OLS", "TLS"),
                     note="group means depend on the random systems drawn; compare orderings only")
    if name == "exp4":
        return Study("exp4", [ExperimentConfig("exp4", n=20, noise_std=1.0, trials=200,
                                               methods=("OLS", "TLS", "WLS"),
                                               systems=_reference_systems(),
                                               wls_init="OLS", wls_iters=1)],
                     scatter=("best", "WLS"))
    raise KeyError(f"unknown preset {name!r}; expected exp1..exp4")


def _group_key(label: str) -> int:
    return zlib.crc32(label.encode())


def _run_trial(cfg: ExperimentConfig, seed: int, sys_index: int, system, k: int):
    """One candidate trial; returns None when rejected by the kappa window."""
    rng = np.random.default_rng([int(seed), _group_key(cfg.label), sys_index, k])
    if system is None:
        gen = cfg.generator
        model = random_stable_system(gen.nx, gen.rho_min, gen.rho_max, rng)
        system_id = f"{cfg.label}:{k}"
    else:
        system_id, model = system
    g_true = markov(model, cfg.n)
    g_hat = g_true + cfg.noise_std * rng.standard_normal(cfg.n)
    h = build_hankel(g_hat, model.nx)
    kap = hankel_kappa(h)
    if cfg.kappa_window is not None:
        lo, hi = cfg.kappa_window
        if not lo < kap < hi:
            return None
    ref = markov(model, cfg.fit_horizon)
    # P_g = noise_std^2 I; any positive scale gives the same WLS estimate
    p_g = (cfg.noise_std ** 2 if cfg.noise_std > 0 else 1.0) * np.eye(cfg.n)
    wls_cfg = WlsConfig(p_g=p_g, init=cfg.wls_init, max_iters=cfg.wls_iters)
    rec = TrialRecord(trial=k, group=cfg.label, system_id=system_id, fits={}, a_hats={},
                      kappa=kap, delta=hankel_delta(h))
    for m in cfg.methods:
        try:
            res = realize(h, m, wls_cfg)
        except RealizerError as exc:
            rec.failures[m] = f"{type(exc).__name__}: {exc}"
            rec.fits[m] = float("nan")
            continue
        rec.fits[m] = fit_score(markov(res.model, cfg.fit_horizon), ref)
        rec.a_hats[m] = [float(v) for v in res.a_hat]
        rec.converged[m] = bool(res.converged)
    return rec


def worker_count(threads: int | None = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("REALIZER_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _map(fn, items, workers):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as ex:
        return list(ex.map(fn, items))


def run_group(cfg: ExperimentConfig, seed: int, threads: int | None = None) -> list[TrialRecord]:
    workers = worker_count(threads)
    records = []
    if cfg.systems is not None:
        for si, system in enumerate(cfg.systems):
            if cfg.kappa_window is None:
                records += _map(lambda k: _run_trial(cfg, seed, si, system, k),
                                range(cfg.trials), workers)
            else:
                records += _accept_until(cfg, seed, si, system, workers)
        return records
    if cfg.kappa_window is None:
        return _map(lambda k: _run_trial(cfg, seed, 0, None, k), range(cfg.trials), workers)
    return _accept_until(cfg, seed, 0, None, workers)


def _accept_until(cfg, seed, si, system, workers) -> list[TrialRecord]:
    accepted = []
    start = 0
    batch = max(256, 64 * workers)
    while len(accepted) < cfg.trials and start < cfg.max_candidates:
        stop = min(start + batch, cfg.max_candidates)
        out = _map(lambda k: _run_trial(cfg, seed, si, system, k), range(start, stop), workers)
        accepted += [r for r in out if r is not None]
        start = stop
    if len(accepted) < cfg.trials:
        log.warning("group %s: only %d of %d trials accepted after %d candidates",
                    cfg.label, len(accepted), cfg.trials, start)
    return accepted[:cfg.trials]


def _finite_mean(x):
    x = np.asarray(x, dtype=float)
    return float(np.mean(x)) if x.size else float("nan")


def group_stats(records: Sequence[TrialRecord], methods: Sequence[str], by: str = "group") -> dict:
    """Per-group (or per-system) aggregates.

    For each group: trial count, per-method mean/median FIT over trials where
    the method succeeded, failure counts, mean kappa and delta, the mean of
    ``FIT_j - FIT_i`` and the win rate of ``j`` over ``i`` for every method
    pair ``(i, j)`` (ties count as half). Groups appear in first-seen order.
    """
    keyf = (lambda r: r.group) if by == "group" else (lambda r: r.system_id)
    order, buckets = [], {}
    for r in records:
        k = keyf(r)
        if k not in buckets:
            order.append(k)
            buckets[k] = []
        buckets[k].append(r)
    out = {}
    for k in order:
        recs = buckets[k]
        entry = {"count": len(recs),
                 "mean_kappa": _finite_mean([r.kappa for r in recs]),
                 "mean_delta": _finite_mean([r.delta for r in recs]),
                 "methods": {}, "pairs": {}}
        for m in methods:
            vals = np.array([r.fits[m] for r in recs if m not in r.failures], dtype=float)
            entry["methods"][m] = {
                "mean_fit": _finite_mean(vals),
                "median_fit": float(np.median(vals)) if vals.size else float("nan"),
                "failures": sum(1 for r in recs if m in r.failures),
            }
        for i, mi in enumerate(methods):
            for mj in methods[i + 1:]:
                both = [r for r in recs if mi not in r.failures and mj not in r.failures]
                diff = np.array([r.fits[mj] - r.fits[mi] for r in both], dtype=float)
                wins = float(np.sum(diff > 0) + 0.5 * np.sum(diff == 0))
                entry["pairs"][f"{mj}-{mi}"] = {
                    "count": len(both),
                    "mean_diff": _finite_mean(diff),
                    "median_diff": float(np.median(diff)) if diff.size else float("nan"),
                    f"win_rate_{mj}": wins / len(both) if both else float("nan"),
                }
        out[k] = entry
    return out


def empty_group_stats(cfg: ExperimentConfig) -> dict:
    return {"count": 0, "methods": {m: {"mean_fit": float("nan")} for m in cfg.methods},
            "pairs": {}}


@dataclass
class StudyResult:
    study: Study
    seed: int
    records: list
    summary: dict


def run_study(study: Study, seed: int = 0, threads: int | None = None) -> StudyResult:
    records = []
    groups = {}
    for cfg in study.groups:
        recs = run_group(cfg, seed, threads)
        records += recs
        by = "system" if cfg.systems is not None and len(cfg.systems) > 1 else "group"
        stats = group_stats(recs, cfg.methods, by=by) if recs else {cfg.label: empty_group_stats(cfg)}
        groups.update(stats)
    summary = {"study": study.name, "seed": int(seed), "groups": groups}
    if study.note:
        summary["note"] = study.note
    return StudyResult(study, seed, records, summary)


def run_experiment(cfg: ExperimentConfig, seed: int = 0, threads: int | None = None):
    """Run a single group; returns ``(records, summary)``."""
    res = run_study(Study(cfg.label, [cfg]), seed, threads)
    return res.records, res.summary


def _fmt(x) -> str:
    return repr(float(x))


def write_records_csv(records: Sequence[TrialRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in records:
            for m in r.fits:
                conv = r.converged.get(m, m not in r.failures)
                w.writerow([r.trial, r.system_id, m, _fmt(r.fits[m]), _fmt(r.kappa),
                            _fmt(r.delta), int(conv)])


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def write_summary_json(summary: dict, path) -> None:
    Path(path).write_text(json.dumps(_json_safe(summary), indent=2, sort_keys=True) + "\n")
