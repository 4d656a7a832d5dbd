"""Desk-scale Monte Carlo study: check vs quantile filtering at one sampling cell.

Writes runs.csv and performance.csv to --out and prints the grouped table.

    python scripts/run_desk_study.py --n-sim 100 --B 200 --workers 4 --out results/desk
"""
import argparse
import sys
import time
from pathlib import Path

from vgboot.bootstrap import CheckFilter, QuantileFilter
from vgboot.study import (
    ALPHAS, DENSITIES, GROUPINGS, TAUS, grouped_report, run_scenarios, scenario_grid,
    write_performance_csv, write_runs_csv,
)


def parse_args(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, nargs="+", default=[500])
    p.add_argument("--density", nargs="+", default=["low"], choices=DENSITIES)
    p.add_argument("--maxdist-factor", type=float, nargs="+", default=[1.5])
    p.add_argument("--taus", type=float, nargs="*", default=list(TAUS))
    p.add_argument("--alphas", type=float, nargs="*", default=list(ALPHAS))
    p.add_argument("--n-sim", type=int, default=100)
    p.add_argument("--B", type=int, default=200)
    p.add_argument("--seed", type=int, default=500)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("results/desk"))
    return p.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    filters = [CheckFilter(t) for t in args.taus] + [QuantileFilter(a) for a in args.alphas]
    scenarios = scenario_grid(args.n, args.density, args.maxdist_factor, filters,
                              n_sim=args.n_sim, B=args.B, seed=args.seed)
    print(f"{len(scenarios)} scenarios x {args.n_sim} runs, B = {args.B}", file=sys.stderr)
    t0 = time.perf_counter()
    results = run_scenarios(scenarios, workers=args.workers)
    print(f"done in {time.perf_counter() - t0:.0f} s", file=sys.stderr)

    args.out.mkdir(parents=True, exist_ok=True)
    write_runs_csv(args.out / "runs.csv", results)
    write_performance_csv(args.out / "performance.csv",
                          [row for g in GROUPINGS for row in grouped_report(results, g)])

    print(f"{'method':<9}{'tuning':>7}{'param':>14}{'eta':>10}{'eta_hat':>12}{'sd':>10}"
          f"{'bias':>12}{'mse':>12}{'conv':>6}")
    for r in grouped_report(results, "tuning"):
        print(f"{r['method']:<9}{r['group']:>7}{r['parameter']:>14}{r['eta']:>10.3f}"
              f"{r['eta_hat_mean']:>12.4g}{r['eta_hat_sd']:>10.4g}{r['bias']:>12.4g}"
              f"{r['mse']:>12.4g}{r['convergence_rate']:>6.2f}")


if __name__ == "__main__":
    main()
