"""Command-line entry point: ``rtbmi <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import rng as rngs
from .config import ConfigError, load_config, shipped_configs
from .harness import (
    SimulationError,
    default_threads,
    emit_table,
    missingness_rows,
    run_scenario,
    scenario_truth,
)
from .imputation import ImputationError
from .inference import analyze_stacks, quantities
from .io import read_completed_csv, read_dataset_csv, write_completed_csv
from .methods import IMPUTATION_METHODS, impute
from .mvn import ParameterError

log = logging.getLogger("rtbmi")

RESULT_COLUMNS = [
    "scenario", "method", "quantity", "point", "se_rubin", "ci_lo", "ci_hi",
    "se_boot", "ci_boot_lo", "ci_boot_hi",
]


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    return str(v)


def _write_results(rows, out) -> None:
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in RESULT_COLUMNS])
    finally:
        if out:
            fh.close()


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.full_scale:
        cfg = cfg.full_scale()
    cfg = cfg.with_overrides(
        seed=args.seed,
        replicates=args.replicates,
        imputations=args.imputations,
        bootstrap=args.bootstrap,
        bootstrap_imputations=args.bootstrap_imputations,
        methods=_csv_list(args.methods) if args.methods else None,
    )
    result = run_scenario(cfg, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _, text = emit_table(result.rows, out / cfg.name)
    with open(out / f"{cfg.name}_replicates.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replicate"] + RESULT_COLUMNS)
        for r in result.records:
            w.writerow([r.replicate, cfg.name] + [_fmt(getattr(r, c)) for c in RESULT_COLUMNS[1:]])
    if result.failures:
        print(f"{len(result.failures)} replicate(s) failed and were skipped", file=sys.stderr)
    sys.stdout.write(text)
    return 0


def cmd_impute(args) -> int:
    if args.method not in IMPUTATION_METHODS:
        raise ConfigError(f"method {args.method!r} does not impute; choose from {list(IMPUTATION_METHODS)}")
    trial = read_dataset_csv(args.csv)
    completed = impute(
        trial, args.method, args.m, rngs.stream(args.seed, rngs.IMPUTE),
        pooled_baseline=not args.per_arm_baseline,
    )
    if args.out:
        write_completed_csv(completed, args.out)
    else:
        write_completed_csv(completed, sys.stdout)
    return 0


def cmd_analyze(args) -> int:
    completed = []
    for path in args.completed:
        completed.extend(read_completed_csv(path))
    labels = completed[0].labels
    if any(c.labels != labels for c in completed):
        raise ConfigError("completed datasets disagree on arm labels")
    stacks = [np.stack([c.arms[i] for c in completed]) for i in range(len(labels))]
    pooled = analyze_stacks(stacks, labels, alpha=args.alpha)
    nan = float("nan")
    rows = [
        {
            "scenario": args.scenario, "method": args.method, "quantity": q,
            "point": p.point, "se_rubin": p.se, "ci_lo": p.ci[0], "ci_hi": p.ci[1],
            "se_boot": nan, "ci_boot_lo": nan, "ci_boot_hi": nan,
        }
        for q, p in pooled.items()
    ]
    _write_results(rows, args.out)
    return 0


def cmd_truth(args) -> int:
    cfg = load_config(args.config).with_overrides(seed=args.seed, mc_subjects=args.mc_subjects)
    truth = scenario_truth(cfg)
    print("quantity,pi,mu_delta_y,truth")
    for q in quantities(cfg.labels):
        if q in truth.arms:
            a = truth.arms[q]
            print(f"{q},{a.pi:.4f},{a.mu_delta_y:.4f},{a.mu_delta_rtb:.3f}")
        else:
            print(f"{q},,,{truth.value(q):.3f}")
    return 0


def cmd_tables(args) -> int:
    if not args.paper and not args.configs:
        raise ConfigError("give --paper or one or more config files")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    wanted = set(args.table or [1, 2, 3, 4])
    overrides = dict(seed=args.seed, replicates=args.replicates, imputations=args.imputations,
                     bootstrap=args.bootstrap)
    if args.paper:
        groups = {
            1: [c for p in ("table2", "table3") for c in shipped_configs(p)],
            2: shipped_configs("table2"),
            3: shipped_configs("table3"),
            4: shipped_configs("table4"),
        }
    else:
        cfgs = [load_config(p) for p in args.configs]
        groups = {1: cfgs, 2: cfgs}
        wanted &= {1, 2}
    for t in sorted(wanted):
        cfgs = [c.with_overrides(**overrides) for c in groups[t]]
        if args.full_scale:
            cfgs = [c.full_scale().with_overrides(**overrides) for c in cfgs]
        if t == 1:
            rows = missingness_rows(cfgs)
        else:
            rows = []
            for cfg in cfgs:
                log.info("running %s", cfg.name)
                rows.extend(run_scenario(cfg, threads=args.threads).rows)
        _, text = emit_table(rows, out / f"table{t}")
        print(f"== table {t} ==")
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rtbmi", description="Return-to-baseline multiple imputation")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a Monte-Carlo scenario")
    s.add_argument("config")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--replicates", "-R", type=int)
    s.add_argument("--imputations", "-m", type=int)
    s.add_argument("--bootstrap", "-B", type=int)
    s.add_argument("--bootstrap-imputations", type=int)
    s.add_argument("--methods", help="comma-separated method tokens")
    s.add_argument("--full-scale", action="store_true", help="5000 replicates, 200 imputations")
    s.add_argument("--threads", type=int, default=None)
    s.add_argument("--out", default="results")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("impute", help="impute a wide-format CSV")
    s.add_argument("csv")
    s.add_argument("--method", required=True, choices=IMPUTATION_METHODS)
    s.add_argument("-m", type=int, default=5, help="number of imputations")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--per-arm-baseline", action="store_true")
    s.add_argument("--out")
    s.add_argument("--threads", type=int, default=None, help="accepted for symmetry; imputation is single-threaded")
    s.set_defaults(func=cmd_impute)

    s = sub.add_parser("analyze", help="ANCOVA plus Rubin pooling of completed CSVs")
    s.add_argument("completed", nargs="+")
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--scenario", default="data")
    s.add_argument("--method", default="unknown")
    s.add_argument("--out")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("truth", help="true RTB mean change for a scenario")
    s.add_argument("config")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mc-subjects", type=int)
    s.set_defaults(func=cmd_truth)

    s = sub.add_parser("tables", help="regenerate the simulation tables")
    s.add_argument("configs", nargs="*")
    s.add_argument("--paper", action="store_true", help="use the bundled scenario files")
    s.add_argument("--table", type=int, action="append", choices=[1, 2, 3, 4])
    s.add_argument("--seed", type=int, default=2022)
    s.add_argument("--replicates", "-R", type=int)
    s.add_argument("--imputations", "-m", type=int)
    s.add_argument("--bootstrap", "-B", type=int)
    s.add_argument("--full-scale", action="store_true")
    s.add_argument("--threads", type=int, default=None)
    s.add_argument("--out", default="tables")
    s.set_defaults(func=cmd_tables)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", None) is None and hasattr(args, "threads"):
        args.threads = default_threads()
    try:
        return args.func(args)
    except (ConfigError, ParameterError, ImputationError, SimulationError, ValueError, OSError) as exc:
        print(f"rtbmi: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
