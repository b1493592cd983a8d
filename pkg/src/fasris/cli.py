"""Command-line entry point: ``fasris run | oracle | validate``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .baselines import OracleBudgetError, exhaustive_oracle, grid_rate, proposed
from .experiments import (
    BUILTIN,
    SOLVER_FAILURES,
    ExperimentConfig,
    builtin,
    channel_seed,
    emit_csv,
    emit_plot_script,
    failure_budget_exceeded,
    format_csv,
    load_config,
    run_experiment,
    scheme_seed,
)
from .geometry_channel import ConfigError, sample_scenario

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("fasris")


def _setup_logging() -> None:
    name = os.environ.get("FASRIS_LOG", "info").strip().lower()
    if name not in LOG_LEVELS:
        raise ConfigError(f"FASRIS_LOG must be one of {', '.join(LOG_LEVELS)}, got {name!r}")
    logging.basicConfig(level=LOG_LEVELS[name], stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _config(args) -> ExperimentConfig:
    base = builtin(args.experiment) if getattr(args, "experiment", None) else None
    if args.config is None:
        if base is None:
            raise ConfigError("either a config file or --experiment is required")
        cfg = base
    else:
        cfg = load_config(args.config, base)
    over = {}
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        over["trials"] = args.trials
    if over:
        cfg = replace(cfg, **over)
        if cfg.trials < 1 or cfg.seed < 0:
            raise ConfigError("--trials must be >= 1 and --seed >= 0")
    return cfg


def cmd_run(args) -> int:
    cfg = _config(args)
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    rows = run_experiment(cfg, workers=args.workers)
    if args.out:
        emit_csv(rows, args.out)
        if args.plot:
            emit_plot_script(rows, args.plot, args.out, xlabel=cfg.sweep.variable or "iteration")
    else:
        sys.stdout.write(format_csv(rows))
    if failure_budget_exceeded(cfg, rows):
        log.error("solver failures exceed %.0f%% of trials", 100 * cfg.max_failure_fraction)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_oracle(args) -> int:
    """Compare the proposed scheme with exhaustive search on every trial."""
    cfg = _config(args)
    scen, params = cfg.point(cfg.sweep.points()[0])
    out = ["trial,oracle_rate,proposed_rate,proposed_grid_rate,ratio"]
    failures = 0
    for t in range(cfg.trials):
        channels = sample_scenario(scen, np.random.default_rng(channel_seed(cfg.seed, t)))
        try:
            oracle = exhaustive_oracle(channels, levels=args.levels, limit=args.limit)
        except OracleBudgetError as exc:
            raise ConfigError(str(exc)) from exc
        try:
            res = proposed(channels, params, np.random.default_rng(scheme_seed(cfg.seed, t, "proposed")))
        except SOLVER_FAILURES as exc:
            log.warning("trial %d: %s", t, exc)
            failures += 1
            continue
        ratio = res.rate / oracle.rate if oracle.rate > 0 else float("nan")
        out.append(f"{t},{oracle.rate:.6g},{res.rate:.6g},"
                   f"{grid_rate(channels, res.design, args.levels):.6g},{ratio:.6g}")
    text = "\n".join(out) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_SOLVER if failures > cfg.max_failure_fraction * cfg.trials else EXIT_OK


def cmd_validate(args) -> int:
    cfg = _config(args)
    print(f"ok: {cfg.name} ({cfg.kind}, {len(cfg.sweep.points())} sweep points, "
          f"{len(cfg.schemes)} schemes, {cfg.trials} trials)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fasris", description="FAS-RIS UAV downlink experiments")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write CSV")
    run.add_argument("config", nargs="?", help="experiment JSON (optional with --experiment)")
    run.add_argument("--out", help="CSV path (default: stdout)")
    run.add_argument("--plot", help="also write a gnuplot script (needs --out)")
    run.add_argument("--seed", type=int)
    run.add_argument("--experiment", choices=sorted(BUILTIN))
    run.add_argument("--trials", type=int)
    run.add_argument("--workers", type=int, default=1)
    run.set_defaults(func=cmd_run)

    orc = sub.add_parser("oracle", help="exhaustive-search ground truth on small instances")
    orc.add_argument("config", nargs="?")
    orc.add_argument("--levels", type=int, default=8, help="phase levels Q")
    orc.add_argument("--limit", type=float, default=1e7, help="evaluation budget")
    orc.add_argument("--seed", type=int)
    orc.add_argument("--trials", type=int)
    orc.add_argument("--out")
    orc.set_defaults(func=cmd_oracle)

    val = sub.add_parser("validate", help="check a config and report every problem")
    val.add_argument("config", nargs="?")
    val.add_argument("--experiment", choices=sorted(BUILTIN))
    val.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _setup_logging()
        if getattr(args, "plot", None) and not args.out:
            raise ConfigError("--plot requires --out")
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
