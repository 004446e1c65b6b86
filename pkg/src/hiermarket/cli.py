"""Command-line entry point.

Exit codes: 0 on success, 1 for configuration errors, 2 for runtime failures.
The worker-pool size defaults to ``$HIERMARKET_WORKERS`` (or 1) and can be
set per call with ``--workers``.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace

import numpy as np

from hiermarket.harness import (
    WORKERS_ENV,
    AnalysisConfig,
    ConfigError,
    _json_safe,
    analyze_prices,
    export,
    load_config,
    run_experiment,
)
from hiermarket.scenarios import EchoConfig, PumpDumpConfig

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _parse_values(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values: cannot parse {text!r} as a comma-separated list of numbers") from None


def _common(p: argparse.ArgumentParser, config_required=True):
    p.add_argument("--config", required=config_required, help="experiment YAML file")
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--workers", type=int, help=f"worker processes (default ${WORKERS_ENV} or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hiermarket", description="Hierarchical agent-based market simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("run", help="run one experiment"))

    p = sub.add_parser("sweep", help="run an experiment over one parameter")
    _common(p)
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma-separated, e.g. 0,0.5,2")

    p = sub.add_parser("analyze", help="stylized facts and bubble tests for a price CSV")
    p.add_argument("--series", required=True, help="CSV with a 'price' column (and optionally 'fundamental')")
    p.add_argument("--level", type=int, choices=(90, 95), default=90)
    p.add_argument("--sample-every", type=int, default=1, help="keep every n-th price for return metrics")
    p.add_argument("--lags", type=int, default=0)
    p.add_argument("--log-prices", action="store_true")

    p = sub.add_parser("scenario", help="run a base config with a scenario overlay")
    kinds = p.add_subparsers(dest="kind", required=True)
    echo = kinds.add_parser("echo")
    _common(echo)
    echo.add_argument("--mode", required=True, choices=("asymmetric", "symmetric", "off"))
    echo.add_argument("--E", type=float, required=True)
    pnd = kinds.add_parser("pnd")
    _common(pnd)
    pnd.add_argument("--target", type=int, required=True)
    pnd.add_argument("--T0", type=int, required=True)
    pnd.add_argument("--T1", type=int, required=True)
    pnd.add_argument("--S", type=float, required=True)
    return parser


def _read_series(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "price" not in reader.fieldnames:
            raise ConfigError(f"{path}: expected a 'price' column")
        rows = list(reader)
    prices = np.array([float(r["price"]) for r in rows])
    if "fundamental" in reader.fieldnames:
        fundamentals = np.array([float(r["fundamental"]) for r in rows])
    else:
        fundamentals = np.full_like(prices, np.nan)
    return prices, fundamentals


def _analyze(args) -> int:
    try:
        prices, fundamentals = _read_series(args.series)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.series}: {exc}") from None
    analysis = AnalysisConfig(level=args.level, lags=args.lags, sample_every=args.sample_every,
                              log_prices=args.log_prices)
    report = analyze_prices(prices, fundamentals, analysis, args.sample_every)
    report["explosive_intervals"] = report.pop("_intervals", [])
    report = {k: v for k, v in report.items() if not k.startswith(("pnd_", "mean_n_"))}
    json.dump(_json_safe(report), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def _run(args) -> int:
    sweep = None
    if args.command == "sweep":
        sweep = (args.param, _parse_values(args.values))
    config = load_config(args.config, sweep_override=sweep)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        config = replace(config, master_seed=args.seed)
    if args.command == "scenario":
        try:
            if args.kind == "echo":
                config = replace(config, echo=EchoConfig(args.mode, args.E), pnd=None)
            else:
                pnd = PumpDumpConfig(args.target, args.T0, args.T1, args.S)
                pnd.validate(config.hierarchy, config.steps)
                config = replace(config, pnd=pnd, echo=None)
        except ValueError as exc:
            raise ConfigError(f"scenario {args.kind}: {exc}") from None
    out_dir = args.out or config.output.dir
    record = run_experiment(config, workers=args.workers)
    written = export(record, out_dir, config.output.formats)
    failed = sum(r["status"] != "ok" for r in record.rows)
    print(f"{len(record.rows)} trials ({failed} failed) -> {out_dir} ({len(written)} files)")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors are configuration errors
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        if args.command == "analyze":
            return _analyze(args)
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
