"""Measure subproblem solve time against the number of RIS elements.

Prints one line per N with the median solve time and the flop model, then the
fitted log-log exponents of both.
"""

import argparse
import statistics
import time

import numpy as np

from fasris import conic_solver as cs
from fasris.analysis import per_iteration_flops, scaling_exponent
from fasris.geometry_channel import ScenarioConfig, sample_scenario
from fasris.sca_core import ExpansionPoint, SCAParams, assemble_subproblem, initial_point


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[25, 50, 100, 200])
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    params = SCAParams()
    settings = cs.SolverSettings(tol=params.solver_tol, max_iters=params.solver_max_iters)
    times, flops = [], []
    print(f"{'N':>5} {'vars':>6} {'rows':>6} {'median ms':>10} {'flop model':>12}")
    for N in args.sizes:
        cfg = ScenarioConfig(ris_elements=N)
        rng = np.random.default_rng(args.seed)
        ch = sample_scenario(cfg, rng)
        reps = []
        for _ in range(args.reps):
            theta, ports = initial_point(ch, rng)
            spec = assemble_subproblem(ch, ExpansionPoint.at(ch, theta, ports), params)
            t0 = time.perf_counter()
            cs.solve(spec.program, settings)
            reps.append(time.perf_counter() - t0)
        times.append(statistics.median(reps))
        flops.append(per_iteration_flops(cfg.num_interferers, N, cfg.tx_paths))
        print(f"{N:>5} {spec.program.n:>6} {spec.program.m:>6} {1e3 * times[-1]:>10.1f} {flops[-1]:>12.3g}")
    print(f"measured exponent {scaling_exponent(args.sizes, times):.2f}, "
          f"flop-model exponent {scaling_exponent(args.sizes, flops):.2f}")


if __name__ == "__main__":
    main()
