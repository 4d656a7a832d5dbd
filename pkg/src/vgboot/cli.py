"""Command-line front end.

Subcommands
-----------
fit        fit the exponential model to an ``x,y,z`` CSV file
bootstrap  filtered generalized bootstrap standard errors
simulate   Monte Carlo scenarios, writes runs.csv and performance.csv
report     re-aggregate runs.csv; optionally write per-lag plot data

Exit codes: 0 success, 1 bad input or configuration, 2 a fit failed the
convergence screen, 3 the bootstrap ran out of attempts.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bootstrap import PARAM_NAMES, BootstrapConfig, CheckFilter, QuantileFilter, run_generalized_bootstrap
from .errors import AllBinsEmpty, AttemptBudgetExhausted, BaseFitFailed, InsufficientBins, NotPositiveDefinite
from .fitting import FitConfig, fit_wls
from .model import eval_model
from .spatial import CSVFormatError, LagGrid, empirical_variogram, read_points_csv, sample_variance
from .study import (
    ALPHAS, DENSITIES, GROUPINGS, MAXDIST_FACTORS, SAMPLE_SIZES, TAUS, grouped_report,
    read_runs_csv, relative_bias, run_scenarios, scenario_grid, write_performance_csv,
    write_runs_csv,
)

log = logging.getLogger("vgboot")

EXIT_OK, EXIT_INPUT, EXIT_SCREEN, EXIT_BUDGET = 0, 1, 2, 3

DEFAULTS = {
    "n_lags": 10,
    "filter": "check",
    "tau": 1.5,
    "alpha": 1.0,
    "bootstrap_b": 1000,
    "seed": 0,
    "n_sim": 100,
    "workers": 1,
    "screen_threshold": 1000.0,
    "max_attempts_factor": 50,
    "screen_replicates": False,
    "sample_sizes": ",".join(map(str, SAMPLE_SIZES)),
    "densities": ",".join(DENSITIES),
    "maxdist_factors": ",".join(map(str, MAXDIST_FACTORS)),
    "taus": ",".join(map(str, TAUS)),
    "alphas": ",".join(f"{a:.2f}" for a in ALPHAS),
    "group_by": "tuning",
    "plot_samples": 100,
}


class ConfigError(Exception):
    pass


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment, dashes equal underscores."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _resolve(args) -> argparse.Namespace:
    """Fill unset flags from the config file, then from DEFAULTS."""
    cfg = read_config(args.config) if args.config else {}
    for key, value in vars(args).copy().items():
        if value is None:
            if key in cfg:
                value = cfg[key]
            elif key in DEFAULTS:
                value = DEFAULTS[key]
            setattr(args, key, value)
    conv = {
        "n_lags": int, "bootstrap_b": int, "seed": int, "n_sim": int, "workers": int,
        "max_attempts_factor": int, "plot_samples": int,
        "tau": float, "alpha": float, "max_dist": float, "screen_threshold": float,
    }
    for key, fn in conv.items():
        v = getattr(args, key, None)
        if v is not None:
            try:
                setattr(args, key, fn(v))
            except ValueError:
                raise ConfigError(f"invalid value for {key}: {v!r}") from None
    if isinstance(getattr(args, "screen_replicates", None), str):
        args.screen_replicates = args.screen_replicates.lower() in ("1", "true", "yes", "on")
    if getattr(args, "bootstrap_b", None) is not None and args.bootstrap_b < 0:
        raise ConfigError(f"bootstrap-b must be >= 0, got {args.bootstrap_b}")
    for key in ("n_lags", "n_sim", "workers", "tau", "alpha", "max_dist",
                "screen_threshold", "max_attempts_factor"):
        v = getattr(args, key, None)
        if v is not None and v <= 0:
            raise ConfigError(f"{key.replace('_', '-')} must be positive, got {v}")
    return args


def _require(args, *names):
    for n in names:
        if getattr(args, n, None) is None:
            raise ConfigError(f"--{n.replace('_', '-')} is required")


def _fit_cfg(args) -> FitConfig:
    return FitConfig(screen_threshold=args.screen_threshold)


def _make_filter(kind, tau, alpha):
    if kind == "check":
        return CheckFilter(tau)
    if kind == "quantile":
        return QuantileFilter(alpha)
    if kind == "none":
        return None
    raise ConfigError(f"unknown filter {kind!r}")


def _write_text(path, text):
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_fit(args) -> int:
    _require(args, "input", "max_dist")
    data = read_points_csv(args.input)
    ev = empirical_variogram(data, LagGrid(args.max_dist, args.n_lags))
    fit = fit_wls(ev, _fit_cfg(args))
    out = fit.to_dict()
    out["empirical_variogram"] = ev.to_dict()
    out["sample_variance"] = sample_variance(data)
    out["relative_bias"] = relative_bias(fit.params, out["sample_variance"])
    _write_text(args.output, _dump(out))
    if not fit.passes_screen:
        log.error("fit failed the convergence screen: %s", fit.params)
        return EXIT_SCREEN
    return EXIT_OK


def format_se_table(run) -> str:
    lines = [f"{'parameter':<14}{'estimate':>14}{'SE':>14}{'SE/estimate':>14}"]
    for name, est, se in zip(PARAM_NAMES, run.theta_hat.as_array(), run.se):
        lines.append(f"{name:<14}{est:>14.6g}{se:>14.6g}{se / est:>14.4g}")
    return "\n".join(lines) + "\n"


def cmd_bootstrap(args) -> int:
    _require(args, "input", "max_dist")
    data = read_points_csv(args.input)
    cfg = BootstrapConfig(
        B=args.bootstrap_b, filter=_make_filter(args.filter, args.tau, args.alpha),
        seed=args.seed, max_attempts_factor=args.max_attempts_factor,
        fit_cfg=_fit_cfg(args), screen_replicates=args.screen_replicates,
    )
    grid = LagGrid(args.max_dist, args.n_lags)
    try:
        run = run_generalized_bootstrap(data, grid, cfg, workers=args.workers)
    except BaseFitFailed as e:
        log.error("%s", e)
        _write_text(args.output, _dump({"status": "base_fit_failed", "stage": e.stage,
                                        "fit": e.fit.to_dict(), "config": cfg.to_dict()}))
        return EXIT_SCREEN
    except AttemptBudgetExhausted as e:
        log.error("%s", e)
        _write_text(args.output, _dump({
            "status": "attempt_budget_exhausted", "n_accepted": e.n_accepted,
            "n_generated": e.n_generated, "n_discarded_filter": e.n_discarded_filter,
            "n_discarded_screen": e.n_discarded_screen, "config": cfg.to_dict(),
        }))
        return EXIT_BUDGET
    out = run.to_dict()
    out["status"] = "ok"
    _write_text(args.output, _dump(out))
    table = format_se_table(run)
    (sys.stderr if args.output in (None, "-") else sys.stdout).write(table)
    return EXIT_OK


def _csv_list(value, fn):
    try:
        return [fn(v.strip()) for v in str(value).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"invalid list {value!r}") from None


def cmd_simulate(args) -> int:
    _require(args, "output")
    out_dir = Path(args.output)
    kinds = _csv_list(args.filter, str)
    filters = []
    for kind in kinds:
        if kind == "check":
            filters += [CheckFilter(t) for t in _csv_list(args.taus, float)]
        elif kind == "quantile":
            filters += [QuantileFilter(a) for a in _csv_list(args.alphas, float)]
        elif kind == "none":
            filters.append(None)
        else:
            raise ConfigError(f"unknown filter {kind!r}")
    densities = _csv_list(args.densities, str)
    if set(densities) - set(DENSITIES):
        raise ConfigError(f"densities must be among {DENSITIES}")
    scenarios = scenario_grid(
        sample_sizes=_csv_list(args.sample_sizes, int), densities=densities,
        maxdist_factors=_csv_list(args.maxdist_factors, float), filters=filters,
        n_sim=args.n_sim, B=args.bootstrap_b, seed=args.seed,
        n_lags=args.n_lags, fit_cfg=_fit_cfg(args),
    )
    log.info("running %d scenarios x %d runs", len(scenarios), args.n_sim)
    results = run_scenarios(scenarios, workers=args.workers)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_runs_csv(out_dir / "runs.csv", results)
    rows = [row for g in GROUPINGS for row in grouped_report(results, g)]
    write_performance_csv(out_dir / "performance.csv", rows)
    return EXIT_OK


def write_plot_data(path, data, grid, fit, n_samples) -> None:
    """Per-lag empirical values and a sampled fitted curve, long format."""
    ev = empirical_variogram(data, grid)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "distance", "gamma", "pair_count"])
        for d, g, c in zip(ev.distances, ev.gamma_hat, ev.pair_counts):
            w.writerow(["empirical", repr(float(d)), "" if c == 0 else repr(float(g)), int(c)])
        for h in np.linspace(0.0, grid.max_dist, n_samples):
            w.writerow(["model", repr(float(h)), repr(float(eval_model(fit.params, h))), ""])


def cmd_report(args) -> int:
    if args.input is None and args.points is None:
        raise ConfigError("report needs --input (runs.csv) and/or --points (x,y,z CSV)")
    if args.input is not None:
        if args.group_by not in GROUPINGS:
            raise ConfigError(f"--group-by must be one of {GROUPINGS}")
        try:
            results = read_runs_csv(args.input)
        except (KeyError, ValueError) as e:
            raise ConfigError(f"cannot read runs file {args.input}: {e}") from None
        rows = grouped_report(results, args.group_by)
        write_performance_csv(sys.stdout if args.output in (None, "-") else args.output, rows)
    if args.points is not None:
        _require(args, "max_dist", "plot_output")
        data = read_points_csv(args.points)
        grid = LagGrid(args.max_dist, args.n_lags)
        fit = fit_wls(empirical_variogram(data, grid), _fit_cfg(args))
        write_plot_data(args.plot_output, data, grid, fit, args.plot_samples)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vgboot",
        description="Exponential semi-variogram fitting with filtered generalized bootstrap standard errors.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat 'key = value' file; command-line flags take precedence")
        p.add_argument("--output", help="output file (fit/bootstrap/report) or directory (simulate)")
        p.add_argument("--seed", type=int, help="master random seed (default 0)")
        p.add_argument("--workers", type=int, help="worker processes; never changes results (default 1)")
        p.add_argument("--n-lags", type=int, help="number of equidistant lag intervals (default 10)")
        p.add_argument("--screen-threshold", type=float,
                       help="fits with any parameter >= this value are rejected (default 1000)")

    p = sub.add_parser("fit", help="fit the model by weighted least squares")
    common(p)
    p.add_argument("--input", help="CSV with header x,y,z")
    p.add_argument("--max-dist", type=float, help="largest pair distance used")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bootstrap", help="filtered generalized bootstrap standard errors")
    common(p)
    p.add_argument("--input", help="CSV with header x,y,z")
    p.add_argument("--max-dist", type=float, help="largest pair distance used")
    p.add_argument("--filter", choices=["check", "quantile", "none"], help="replicate filter (default check)")
    p.add_argument("--tau", type=float,
                   help="check filter factor, any positive value; studied grid 1.1, 1.5, 2.0, 2.5, 3.0 (default 1.5)")
    p.add_argument("--alpha", type=float,
                   help="quantile filter level in (0, 1]; studied grid 0.75, 0.80, 0.85, 0.90, 0.95, 1.00; "
                        "1.0 means no filtering (default 1.0)")
    p.add_argument("--bootstrap-b", type=int, help="number of retained replicates B (default 1000)")
    p.add_argument("--max-attempts-factor", type=int, help="attempt budget as a multiple of B (default 50)")
    p.add_argument("--screen-replicates", action="store_const", const=True,
                   help="also drop replicate fits failing the convergence screen")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("simulate", help="Monte Carlo scenario study")
    common(p)
    p.add_argument("--sample-sizes", help="comma list (default 500,1000,2000)")
    p.add_argument("--densities", help="comma list of low,middle,high (default all three)")
    p.add_argument("--maxdist-factors", help="multiples of the practical range 599.15 (default 1.1,1.5,2.0)")
    p.add_argument("--filter", help="comma list of check,quantile,none (default check)")
    p.add_argument("--taus", "--tau", dest="taus", help="check filter grid (default 1.1,1.5,2.0,2.5,3.0)")
    p.add_argument("--alphas", "--alpha", dest="alphas",
                   help="quantile filter grid (default 0.75,0.80,0.85,0.90,0.95,1.00)")
    p.add_argument("--bootstrap-b", type=int, help="replicates per bootstrap; 0 = fit and screen only (default 1000)")
    p.add_argument("--n-sim", type=int, help="runs per scenario (default 100; 3000 for full scale)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="grouped performance table and plot data")
    common(p)
    p.add_argument("--input", help="runs.csv written by 'simulate'")
    p.add_argument("--group-by", choices=GROUPINGS, help="grouping (default tuning)")
    p.add_argument("--points", help="x,y,z CSV for plot data")
    p.add_argument("--max-dist", type=float, help="largest pair distance for plot data")
    p.add_argument("--plot-output", help="CSV of empirical and fitted semi-variances")
    p.add_argument("--plot-samples", type=int, help="model curve samples (default 100)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        args = _resolve(args)
        return args.func(args)
    except (ConfigError, CSVFormatError, OSError, AllBinsEmpty, InsufficientBins,
            NotPositiveDefinite, ValueError) as e:
        print(f"vgboot {args.command}: error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
