"""Command-line front end.

Subcommands::

    optcd calibrate --config exp.ini      limits for each target (or a fixed c)
    optcd evaluate  --config exp.ini      ARL0 / GARL / J report for the detectors
    optcd reproduce sec41|sec42|table1|table2|fig1
    optcd oracle    [--p0 0.5 --p1 0.75 --N 3 --c 0.25 1 4 --pairs M2 "M5(r=0)" M6]

Exit codes: 0 success, 2 bad configuration or precondition, 3 missing file,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import re
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import presets
from ._expr import parse_call
from .config import ConfigError, ExperimentConfig, load_config
from .detectors import ConfigurationError, Detector, optimal_detector, parse_detector
from .limits import (CalibrationFailure, InfeasibleTarget, NullPaths, NumericalFailure,
                     UnsupportedConfiguration, calibrate, limits_for, load_limits, save_limits)
from .models import IIDBernoulli
from .simkit import Estimate, RunReport, evaluate, oracle_optimal
from .weights import parse_pair

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC = 0, 2, 3, 4


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9.=_-]+", "_", text).strip("_")


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.reps is not None:
        cfg.reps = cfg.calibration_reps = args.reps
    if args.out is not None:
        cfg.out_dir = Path(args.out)
    return cfg


def _need_config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("this subcommand needs --config PATH")
    return _apply_overrides(load_config(args.config), args)


# --- calibrate -------------------------------------------------------------------

CALIBRATION_HEADER = ("pair", "target", "c", "achieved", "stderr", "iterations", "feasible_low",
                      "feasible_high", "file")


def cmd_calibrate(cfg: ExperimentConfig, out=None) -> list[dict]:
    """Compute and persist limits for every target (or for the fixed ``c``)."""
    out = out or sys.stdout
    if cfg.pair is None:
        raise ConfigError(f"{cfg.source}: [pair] id is required for calibrate")
    if cfg.c is None and not cfg.targets:
        raise ConfigError(f"{cfg.source}: give [run] targets or a fixed c")
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    paths = NullPaths(cfg.model, cfg.N, cfg.calibration_reps, cfg.seed)
    rows = []
    jobs = [("c", cfg.c)] if cfg.c is not None else [("target", t) for t in cfg.targets]
    for kind, value in jobs:
        if kind == "c":
            grid, table = limits_for(cfg.model, cfg.pair, value, cfg.N, cfg.grid)
            det = optimal_detector(cfg.model, cfg.pair, table if table is not None else grid)
            est = Estimate.from_samples(paths.v_totals(det, cfg.pair))
            c, achieved, se, iters, feasible, target = value, est.value, est.stderr, 0, paths.v_bounds(cfg.pair), ""
            tag = f"c{value:g}"
        else:
            res = calibrate(cfg.model, cfg.pair, value, cfg.N, spec=cfg.grid, tol=cfg.tolerance, paths=paths)
            grid, table = res.grid, res.table
            c, achieved, se, iters, feasible, target = (res.c_gamma, res.achieved_gamma, res.mc_stderr,
                                                        res.iterations, res.feasible, value)
            tag = f"g{value:g}"
        keep_grid = cfg.save_grid == "true" or (cfg.save_grid == "auto" and (table is None or grid.kind == "curve"))
        path = cfg.out_dir / f"limits_{_slug(cfg.pair.label)}_{tag}.txt"
        save_limits(path, grid if keep_grid else None, table,
                    extra={"model_spec": cfg.model.spec(), "pair_spec": cfg.pair.label, "target": target,
                           "achieved": repr(achieved), "stderr": repr(se), "seed": cfg.seed,
                           "reps": cfg.calibration_reps})
        row = dict(zip(CALIBRATION_HEADER, (cfg.pair.label, target, repr(c), repr(achieved), repr(se), iters,
                                            repr(feasible[0]), repr(feasible[1]), str(path))))
        rows.append(row)
        print(f"{cfg.pair.label} {kind}={value:g}: c = {c:.8g}, generalized ARL0 = {achieved:.4f} "
              f"+- {se:.4f} -> {path}", file=out)
    with open(cfg.out_dir / "calibration.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, CALIBRATION_HEADER, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return rows


# --- evaluate --------------------------------------------------------------------

def _resolve_path(cfg: ExperimentConfig, text: str) -> Path:
    p = Path(text)
    if p.exists() or p.is_absolute():
        return p
    alt = cfg.base_dir / p
    return alt if alt.exists() else p


def build_detector(cfg: ExperimentConfig, name: str, spec: str) -> Detector:
    """Baseline spec strings, ``optimal("limits.txt")`` or ``optimal(c=2.0[, pair="M6"])``."""
    head, args, kwargs = parse_call(spec)
    if head != "optimal":
        return replace(parse_detector(spec, cfg.model, cfg.N), name=name)
    if args:
        path = _resolve_path(cfg, str(args[0]))
        if not path.exists():
            raise FileNotFoundError(f"limit file {path} (detector {name}) not found")
        lf = load_limits(path)
        pair = parse_pair(lf.extra.get("pair_spec", lf.pair_id))
        recorded = lf.extra.get("model_spec")
        if recorded and recorded != cfg.model.spec():
            raise ConfigError(f"{path}: limits were computed for {recorded}, config model is {cfg.model.spec()}")
        if lf.N != cfg.N:
            raise ConfigError(f"{path}: limits have N = {lf.N}, config has N = {cfg.N}")
        if lf.table is not None:
            return optimal_detector(cfg.model, pair, lf.table, name=name)
        lf.grid.model, lf.grid.pair = cfg.model, pair
        return optimal_detector(cfg.model, pair, lf.grid, name=name)
    if "c" not in kwargs:
        raise ConfigError(f"detector {name}: optimal() needs a limit file or c=")
    pair = parse_pair(kwargs["pair"]) if "pair" in kwargs else cfg.pair
    if pair is None:
        raise ConfigError(f"detector {name}: no pair given and no [pair] section")
    grid, table = limits_for(cfg.model, pair, float(kwargs["c"]), cfg.N, cfg.grid)
    return optimal_detector(cfg.model, pair, table if table is not None else grid, name=name)


def cmd_evaluate(cfg: ExperimentConfig, workers: int = 1, out=None) -> RunReport:
    out = out or sys.stdout
    pairs = cfg.eval_pairs or ([cfg.pair] if cfg.pair is not None else [])
    if cfg.detectors and not pairs:
        raise ConfigError(f"{cfg.source}: set [run] eval_pairs or [pair] id")
    dets = [build_detector(cfg, name, spec) for name, spec in cfg.detectors]
    report = evaluate(dets, pairs, cfg.reps, cfg.seed, workers=workers, identity=cfg.identity)
    report.model_id = cfg.model.spec()
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / "report.csv"
    report.to_csv(path)
    for row in report.rows:
        print(f"{row[0]:<24} {row[1]:<10} {row[2]:<14} {row[3]:12.4f} +- {row[4]:.4f}", file=out)
    print(f"wrote {path}", file=out)
    return report


# --- reproduce -------------------------------------------------------------------

def cmd_reproduce(preset: str, out_dir: Path, seed: Optional[int] = None, reps: Optional[int] = None,
                  workers: int = 1, out=None):
    out = out or sys.stdout
    out_dir.mkdir(parents=True, exist_ok=True)
    kw = {}
    if seed is not None:
        kw["seed"] = seed
    if reps is not None:
        kw["reps"] = reps
    if preset == "fig1":
        data, c = presets.fig1(**kw)
        path = out_dir / "fig1.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "T_C", "T_star_6"])
            for n, a, b in data:
                w.writerow([int(n), repr(float(a)), repr(float(b))])
        print(f"fig1: T*6 calibrated c = {c:.6g}; wrote {path}", file=out)
        return data
    fn = getattr(presets, preset)
    log = (lambda s: print(s, file=out, flush=True)) if preset.startswith("table") else (lambda s: None)
    res = fn(workers=workers, log=log, **kw) if preset.startswith("table") else fn(workers=workers, **kw)
    path = out_dir / f"{preset}.csv"
    res.to_csv(path)
    if res.report is not None:
        res.report.to_csv(out_dir / f"{preset}_runs.csv")
    if preset == "sec41":
        with open(out_dir / "sec41_profiles.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            names = list(res.extra["profiles"])
            w.writerow(["k"] + [f"{n}_lorden" for n in names] + [f"{n}_stderr" for n in names])
            profs = [res.extra["profiles"][n] for n in names]
            for k in range(len(profs[0].lorden)):
                w.writerow([k + 1] + [repr(float(p.lorden[k])) for p in profs]
                           + [repr(float(p.lorden_stderr[k])) for p in profs])
    for r in res.rows:
        verdict = "" if r.passed is None else ("pass" if r.passed else "FAIL")
        print(f"{r.quantity:<52} reference {r.reference:>10.5g}  reproduced {r.reproduced:>10.5g}  "
              f"tol {r.tolerance_text:<6} {verdict}", file=out)
    n_ok = sum(bool(r.passed) for r in res.checked)
    print(f"{preset}: {n_ok}/{len(res.checked)} checks pass ({res.wall_time:.1f} s); wrote {path}", file=out)
    return res


# --- oracle ----------------------------------------------------------------------

def cmd_oracle(p0: float, p1: float, N: int, cs: Sequence[float], pair_specs: Sequence[str],
               out=None) -> bool:
    out = out or sys.stdout
    model = IIDBernoulli(p0, p1)
    ok = True
    for spec in pair_specs:
        pair = parse_pair(spec)
        for c in cs:
            res = oracle_optimal(model, pair, c, N)
            same = res.all_equal
            ok &= same
            if res.exhaustive_min is not None:
                rel = "=" if same else "!="
                print(f"{pair.label} c={c:g}: exhaustive {rel} DP {rel} T* = {res.dp_min} "
                      f"({float(res.dp_min):.10g}); {res.n_rules} rules enumerated", file=out)
            else:
                rel = "=" if same else "!="
                print(f"{pair.label} c={c:g}: DP {rel} T* = {res.dp_min} ({float(res.dp_min):.10g})", file=out)
    return ok


# --- entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config file (INI)")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--workers", type=int, default=1, help="worker threads")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--reps", type=int, help="Monte Carlo repetitions (overrides the config)")

    parser = argparse.ArgumentParser(prog="optcd", description="Finite-horizon optimal change detection.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("calibrate", parents=[common], help="compute and save limits")
    sub.add_parser("evaluate", parents=[common], help="simulate detectors and write a report")
    rp = sub.add_parser("reproduce", parents=[common], help="run a reproduction preset")
    rp.add_argument("preset", choices=presets.PRESETS)
    op = sub.add_parser("oracle", parents=[common], help="exact optimality check on a Bernoulli tree")
    op.add_argument("--p0", type=float, default=0.5)
    op.add_argument("--p1", type=float, default=0.75)
    op.add_argument("--N", type=int, default=3)
    op.add_argument("--c", type=float, nargs="+", default=[0.25, 1.0, 4.0])
    op.add_argument("--pairs", nargs="+", default=["M2", "M5(r=0)", "M6"])
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "calibrate":
            cmd_calibrate(_need_config(args))
        elif args.command == "evaluate":
            cmd_evaluate(_need_config(args), workers=args.workers)
        elif args.command == "reproduce":
            cmd_reproduce(args.preset, Path(args.out or "out"), args.seed, args.reps, args.workers)
        elif args.command == "oracle":
            if not cmd_oracle(args.p0, args.p1, args.N, args.c, args.pairs):
                return EXIT_NUMERIC
    except InfeasibleTarget as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (NumericalFailure, CalibrationFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ConfigurationError, UnsupportedConfiguration, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
