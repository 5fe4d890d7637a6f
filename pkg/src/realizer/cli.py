"""
Command-line front end.

    realizer realize    --in g.csv --nx 2 --method ols [--pg pg.csv] [--out r.json]
    realizer diagnose   --in g.csv --nx 2 [--truth model.json]
    realizer experiment exp1 --out dir [--seed N] [--svg] [--trials N]
    realizer experiment --config cfg.json --out dir
    realizer covariance --model model.json --n 20 [--pg pg.csv]

Exit codes: 0 success, 1 input/IO error, 2 numerical/estimator error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import numkernel as nk
from .diagnostics import asymptotic_covariances, sensitivity_report
from .errors import (
    DimensionError,
    InstabilityError,
    NumericalFailure,
    RankError,
    RealizerError,
    SamplingError,
)
from .estimators import METHODS, WlsConfig, realize
from .experiments import (
    Study,
    preset,
    run_study,
    write_records_csv,
    write_summary_json,
)
from .hankel import build_hankel
from .model import StateSpaceModel, char_poly_of, markov

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2

log = logging.getLogger("realizer")


class InputError(Exception):
    """Bad user input (malformed file, inconsistent flags)."""


def read_markov_csv(path) -> np.ndarray:
    """One scalar per line; an optional first line ``g`` is a header."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    vals = []
    for lineno, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text:
            continue
        if lineno == 1 and text.lower() == "g":
            continue
        try:
            v = float(text)
        except ValueError:
            raise InputError(f"{path}:{lineno}: not a number: {text!r}") from None
        if not np.isfinite(v):
            raise InputError(f"{path}:{lineno}: non-finite value {text!r}")
        vals.append(v)
    if not vals:
        raise InputError(f"{path}: no Markov parameters found")
    return np.array(vals)


def read_matrix_csv(path) -> np.ndarray:
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    out = []
    for lineno, row in enumerate(rows, start=1):
        try:
            out.append([float(c) for c in row])
        except ValueError:
            raise InputError(f"{path}:{lineno}: malformed row {row!r}") from None
    if not out or len({len(r) for r in out}) != 1:
        raise InputError(f"{path}: rows must be nonempty and of equal length")
    return np.array(out)


def read_model_json(path) -> StateSpaceModel:
    try:
        return StateSpaceModel.from_json(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: invalid model JSON: {exc}") from exc


def _emit(obj: dict, out=None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text)
    except OSError as exc:
        raise InputError(f"cannot write {out}: {exc.strerror}") from exc


def _read_pg(path, n: int):
    p_g = read_matrix_csv(path)
    if p_g.shape != (n, n):
        raise InputError(f"{path}: P_g must be {n}x{n}, got {p_g.shape[0]}x{p_g.shape[1]}")
    return p_g


def cmd_realize(args) -> int:
    g = read_markov_csv(args.inp)
    h = build_hankel(g, args.nx)
    method = args.method.upper()
    wls = None
    if method == "WLS":
        if args.pg is None:
            print("warning: no --pg given; using identity P_g for WLS", file=sys.stderr)
            p_g = None
        else:
            p_g = _read_pg(args.pg, g.size)
        wls = WlsConfig(p_g=p_g)
    elif args.pg is not None:
        print(f"warning: --pg is ignored by {method}", file=sys.stderr)
    res = realize(h, method, wls)
    _emit(res.to_dict(), args.out)
    return EXIT_OK


def require_rank(h) -> None:
    s = h.sigma_plus
    if s[0] == 0.0 or s[h.nx - 1] <= nk.default_rank_tol(h.h_plus.shape) * s[0]:
        raise RankError(f"upper Hankel block has rank below nx={h.nx} "
                        f"(sigma+_nx = {s[h.nx - 1]:.3e})")


def cmd_diagnose(args) -> int:
    g = read_markov_csv(args.inp)
    truth = read_model_json(args.truth) if args.truth else None
    h = build_hankel(g, args.nx)
    require_rank(h)
    if truth is not None and truth.nx != args.nx:
        raise InputError(f"--truth model has nx={truth.nx}, expected {args.nx}")
    rep = sensitivity_report(h, truth)
    _emit(rep.to_dict())
    return EXIT_OK


def _load_study(args) -> Study:
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise InputError(f"cannot read {args.config}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.config}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
        try:
            study = Study.from_dict(cfg)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{args.config}: invalid experiment config: {exc}") from exc
    else:
        try:
            study = preset(args.preset)
        except KeyError as exc:
            raise InputError(str(exc.args[0])) from exc
    if args.trials is not None:
        if args.trials < 1:
            raise InputError("--trials must be >= 1")
        study = study.with_trials(args.trials)
    return study


def _write_scatters(result, out_dir: Path) -> list[str]:
    from .plotting import paired_fits, scatter_svg

    written = []
    mx, my = result.study.scatter
    for cfg in result.study.groups:
        recs = [r for r in result.records if r.group == cfg.label]
        ids = [sid for sid, _ in cfg.systems] if cfg.systems is not None else [None]
        for sid in ids:
            x_m = mx
            if mx == "best":
                # better of OLS/TLS for this system by mean FIT
                stats = result.summary["groups"].get(sid or cfg.label, {}).get("methods", {})
                cands = [m for m in ("OLS", "TLS") if m in stats]
                x_m = max(cands, key=lambda m: stats[m]["mean_fit"]) if cands else "OLS"
            x, y = paired_fits(recs, x_m, my, system_id=sid)
            name = f"scatter_{sid or cfg.label}.svg".replace(":", "_")
            title = f"{result.study.name} {sid or cfg.label}"
            scatter_svg(x, y, out_dir / name, f"FIT {x_m}", f"FIT {my}", title)
            written.append(name)
    return written


def cmd_experiment(args) -> int:
    if bool(args.preset) == bool(args.config):
        raise InputError("give exactly one of a preset name or --config")
    study = _load_study(args)
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise InputError(f"output directory {out_dir} is not writable: {exc.strerror}") from exc
    result = run_study(study, seed=args.seed)
    try:
        write_records_csv(result.records, out_dir / "records.csv")
        write_summary_json(result.summary, out_dir / "summary.json")
        if args.svg:
            for name in _write_scatters(result, out_dir):
                log.info("wrote %s", out_dir / name)
    except OSError as exc:
        raise InputError(f"cannot write results to {out_dir}: {exc.strerror}") from exc
    print(f"{len(result.records)} trials -> {out_dir / 'records.csv'}", file=sys.stderr)
    return EXIT_OK


def cmd_covariance(args) -> int:
    model = read_model_json(args.model)
    p_g = _read_pg(args.pg, args.n) if args.pg else np.eye(args.n)
    h_true = build_hankel(markov(model, args.n), model.nx)
    cov = asymptotic_covariances(h_true, char_poly_of(model), p_g)
    _emit(cov.to_dict())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="realizer",
                                 description="Approximate realization from noisy Markov parameters")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("realize", help="estimate a state-space model")
    p.add_argument("--in", dest="inp", required=True, help="Markov parameter CSV")
    p.add_argument("--nx", type=int, required=True)
    p.add_argument("--method", type=str.lower, choices=[m.lower() for m in METHODS], default="ols")
    p.add_argument("--pg", help="P_g covariance CSV (WLS)")
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_realize)

    p = sub.add_parser("diagnose", help="kappa, delta and singular values")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--nx", type=int, required=True)
    p.add_argument("--truth", help="true model JSON (adds bound terms)")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("experiment", help="run a Monte Carlo study")
    p.add_argument("preset", nargs="?", help="exp1 | exp2 | exp3 | exp4")
    p.add_argument("--config", help="study JSON instead of a preset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--svg", action="store_true", help="write FIT scatter plots")
    p.add_argument("--trials", type=int, help="override trials per group")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("covariance", help="asymptotic OLS/WLS covariances")
    p.add_argument("--model", required=True, help="model JSON")
    p.add_argument("--n", type=int, required=True, help="number of Markov parameters")
    p.add_argument("--pg", help="P_g covariance CSV (default identity)")
    p.set_defaults(func=cmd_covariance)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, DimensionError, InstabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalFailure, RealizerError, SamplingError, np.linalg.LinAlgError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
