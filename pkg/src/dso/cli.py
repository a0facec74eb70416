"""Command-line harness.

Subcommands::

    dso run      one function, R seeded runs, optional runs/trace CSVs
    dso suite    every suite function, one summary row each
    dso compare  Friedman + W/T/L report over an averages fixture

Configuration precedence is flags > key-value config file > built-in
defaults.  Run ``i`` of a multi-run invocation uses seed ``base + i`` and
the problem shift is drawn from the base seed, so any invocation is exactly
reproducible from its flags.  Output files are written to a temporary file
first and renamed into place, so a crash never leaves a truncated CSV.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import os
import sys
import tempfile
from importlib import resources

from .benchmarks import SUITE_FUNCTIONS, make_problem
from .command_center import DsoConfig, RunRecord, run
from .stats import descriptive, friedman, load_comparison_matrix, wtl_against

RUNS_CSV_HEADER = ("run_id", "seed", "function", "dim", "budget",
                   "evals_used", "iterations", "best_error", "success")
TRACE_CSV_HEADER = ("run_id", "iteration", "evals", "gbofv",
                    "team_qualities", "firmware_changed")
SUITE_CSV_HEADER = ("function", "min", "median", "max", "mean", "std", "sr")


# --------------------------------------------------------------------------
# Configuration plumbing

_CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(DsoConfig)}


def _parse_config_value(name: str, raw: str):
    if name not in _CONFIG_FIELDS:
        raise ValueError(f"unknown configuration key {name!r}")
    default = getattr(DsoConfig(), name)
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    raise ValueError(f"cannot parse configuration key {name!r}")


def load_config_file(path: str) -> dict:
    """Key-value file, one ``key = value`` per line, ``#`` comments."""
    overrides = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, raw = (part.strip() for part in line.split("=", 1))
            overrides[key] = _parse_config_value(key, raw)
    return overrides


def build_config(config_path: str | None, flag_overrides: dict) -> DsoConfig:
    values: dict = {}
    if config_path:
        values.update(load_config_file(config_path))
    values.update({k: v for k, v in flag_overrides.items() if v is not None})
    return DsoConfig(**values)


def _flag_overrides(args) -> dict:
    overrides = {
        "teams": args.teams,
        "drones": args.drones,
        "budget": args.budget,
        "max_iterations": args.max_iterations,
    }
    for item in args.set or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, raw = (part.strip() for part in item.split("=", 1))
        overrides[key] = _parse_config_value(key, raw)
    return overrides


# --------------------------------------------------------------------------
# Output writers

def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=os.path.basename(path) + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def runs_csv_text(records: list[RunRecord], budget: int, threshold: float) -> str:
    rows = [
        (i, rec.seed, rec.function, rec.dim, budget, rec.evals_used, rec.iterations,
         format(rec.best_error, ".17g"), int(rec.best_error < threshold))
        for i, rec in enumerate(records)
    ]
    return _csv_text(RUNS_CSV_HEADER, rows)


def trace_csv_text(records: list[RunRecord]) -> str:
    rows = []
    for i, rec in enumerate(records):
        for row in rec.trace:
            rows.append((
                i, row.iteration, row.evals, format(row.gbofv, ".17g"),
                ";".join(format(q, ".10g") for q in row.team_qualities),
                int(row.firmware_changed),
            ))
    return _csv_text(TRACE_CSV_HEADER, rows)


def firmware_log_text(records: list[RunRecord]) -> str:
    lines = []
    for i, rec in enumerate(records):
        for change in rec.firmware_log:
            lines.append(f"run={i} iteration={change.iteration} "
                         f"team={change.team_id} {change.new_text}")
    return "\n".join(lines) + ("\n" if lines else "")


def _stats_line(stats) -> str:
    return (f"min={stats.minimum:.3E} median={stats.median:.3E} max={stats.maximum:.3E} "
            f"mean={stats.mean:.3E} std={stats.std:.3E} SR={stats.success_rate:.3f}")


# --------------------------------------------------------------------------
# Subcommands

def _execute_runs(function: str, dim: int, runs: int, seed: int, cfg: DsoConfig) -> list[RunRecord]:
    problem = make_problem(function, dim, seed=seed)
    return [run(problem, cfg, seed=seed + i) for i in range(runs)]


def cmd_run(args) -> int:
    cfg = build_config(args.config, _flag_overrides(args))
    records = _execute_runs(args.function, args.dim, args.runs, args.seed, cfg)
    if args.out:
        _atomic_write(args.out, runs_csv_text(records, cfg.budget, cfg.success_threshold))
    if args.trace_out:
        _atomic_write(args.trace_out, trace_csv_text(records))
    if args.firmware_log:
        _atomic_write(args.firmware_log, firmware_log_text(records))
    stats = descriptive([rec.best_error for rec in records], cfg.success_threshold)
    print(f"{args.function} D={args.dim} runs={args.runs}: {_stats_line(stats)}")
    return 0


def cmd_suite(args) -> int:
    cfg = build_config(args.config, _flag_overrides(args))
    header = f"{'function':<12} {'min':>10} {'median':>10} {'max':>10} {'mean':>10} {'std':>10} {'SR':>6}"
    print(header)
    csv_rows = []
    for function in SUITE_FUNCTIONS:
        records = _execute_runs(function, args.dim, args.runs, args.seed, cfg)
        stats = descriptive([rec.best_error for rec in records], cfg.success_threshold)
        print(f"{function:<12} {stats.minimum:>10.3E} {stats.median:>10.3E} "
              f"{stats.maximum:>10.3E} {stats.mean:>10.3E} {stats.std:>10.3E} "
              f"{stats.success_rate:>6.3f}")
        csv_rows.append((function,
                         format(stats.minimum, ".17g"), format(stats.median, ".17g"),
                         format(stats.maximum, ".17g"), format(stats.mean, ".17g"),
                         format(stats.std, ".17g"), format(stats.success_rate, ".17g")))
    if args.out:
        _atomic_write(args.out, _csv_text(SUITE_CSV_HEADER, csv_rows))
    return 0


def packaged_fixture_path():
    return resources.as_file(resources.files("dso").joinpath("data/cec2005_10d_averages.csv"))


def cmd_compare(args) -> int:
    if args.fixture:
        matrix = load_comparison_matrix(args.fixture)
    else:
        with packaged_fixture_path() as path:
            matrix = load_comparison_matrix(path)
    result = friedman(matrix)
    print(f"Friedman rank sum test over {len(matrix.methods)} methods on "
          f"{len(matrix.functions)} functions:")
    print(f"  chi2({result.df}) = {result.chi2:.4f}, p = {result.p_value:.3E}")
    print(f"W/T/L of {args.control} against each method:")
    for name, (w, t, l) in wtl_against(matrix, args.control):
        print(f"  {name:<12} {w}/{t}/{l}")
    return 0


# --------------------------------------------------------------------------
# Parser

def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--teams", type=int, help="teams in the squadron")
    parser.add_argument("--drones", type=int, help="drones per team")
    parser.add_argument("--budget", type=int, help="total objective evaluations")
    parser.add_argument("--max-iterations", type=int, help="iteration cap")
    parser.add_argument("--config", help="key-value configuration file")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override any configuration field (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dso",
                                     description="Drone Squadron Optimization harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one benchmark function")
    p_run.add_argument("--function", required=True, help="benchmark function name")
    p_run.add_argument("--dim", type=int, default=10, help="problem dimension")
    p_run.add_argument("--runs", type=int, default=1, help="independent seeded runs")
    p_run.add_argument("--seed", type=int, default=0,
                       help="base seed; run i uses seed base+i, the shift uses base")
    p_run.add_argument("--out", help="runs CSV path")
    p_run.add_argument("--trace-out", help="per-iteration trace CSV path")
    p_run.add_argument("--firmware-log", help="firmware replacement log path")
    _add_config_flags(p_run)
    p_run.set_defaults(handler=cmd_run)

    p_suite = sub.add_parser("suite", help="run the whole function suite")
    p_suite.add_argument("--dim", type=int, default=10)
    p_suite.add_argument("--runs", type=int, default=10)
    p_suite.add_argument("--seed", type=int, default=0)
    p_suite.add_argument("--out", help="summary CSV path")
    _add_config_flags(p_suite)
    p_suite.set_defaults(handler=cmd_suite)

    p_cmp = sub.add_parser("compare", help="rank analysis over an averages fixture")
    p_cmp.add_argument("--fixture", help="averages CSV (default: packaged fixture)")
    p_cmp.add_argument("--control", default="DSO", help="control method name")
    p_cmp.set_defaults(handler=cmd_compare)
    return parser


def _validate_args(parser: argparse.ArgumentParser, args) -> None:
    if args.command in ("run", "suite"):
        if args.command == "run" and args.function not in SUITE_FUNCTIONS:
            parser.error(f"unknown function {args.function!r} (choose from {', '.join(SUITE_FUNCTIONS)})")
        if args.dim < 1:
            parser.error("--dim must be at least 1")
        if args.runs < 1:
            parser.error("--runs must be at least 1")
        if args.budget is not None and args.budget <= 0:
            parser.error("--budget must be positive")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate_args(parser, args)
    try:
        return args.handler(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"dso {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
