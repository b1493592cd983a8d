"""Run every built-in experiment and write CSV plus gnuplot scripts.

    python3 scripts/run_figures.py --out results --trials 50 --workers 4
    python3 scripts/run_figures.py --only rate-vs-ports convergence
"""

import argparse
import logging
import time
from dataclasses import replace
from pathlib import Path

from fasris.experiments import BUILTIN, emit_csv, emit_plot_script, load_config, run_experiment

CONFIGS = Path(__file__).parent / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--trials", type=int, help="override the trial count of every experiment")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--only", nargs="+", choices=sorted(BUILTIN), default=sorted(BUILTIN))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.only:
        cfg = load_config(CONFIGS / f"{name}.json")
        if args.trials:
            cfg = replace(cfg, trials=args.trials)
        t0 = time.perf_counter()
        rows = run_experiment(cfg, workers=args.workers)
        csv_path = out / f"{name}.csv"
        emit_csv(rows, csv_path)
        emit_plot_script(rows, out / f"{name}.gp", csv_path, xlabel=cfg.sweep.variable or "iteration")
        logging.info("%s done in %.0f s -> %s", name, time.perf_counter() - t0, csv_path)


if __name__ == "__main__":
    main()
