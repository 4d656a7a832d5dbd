"""Monte Carlo study of bootstrap standard errors, plus the case-study sweep.

Each scenario simulates ``n_sim`` datasets from a zero-mean Gaussian process
with an exponential covariance, fits the model, screens the fit and runs the
filtered generalized bootstrap.  The spread of the fitted parameters across
runs stands in for the true standard error against which the bootstrap
estimates are scored.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from itertools import groupby

import numpy as np

from ._parallel import ordered_map, rng_for
from .bootstrap import (
    BootstrapConfig, CheckFilter, PARAM_NAMES, QuantileFilter, build_covariance_matrix,
    cholesky_lower, run_generalized_bootstrap,
)
from .errors import AttemptBudgetExhausted, BaseFitFailed, InsufficientBins, NotPositiveDefinite
from .fitting import FitConfig, fit_wls
from .model import ExpVariogramParams, practical_range
from .spatial import LagGrid, SpatialDataset, empirical_variogram, sample_variance

TRUE_PARAMS = ExpVariogramParams(60.0, 40.0, 200.0)
DOMAIN_SIDE = 10000.0
DENSITY_SIDES = {"low": 10000.0, "middle": 5000.0, "high": 2500.0}

SAMPLE_SIZES = (500, 1000, 2000)
DENSITIES = ("low", "middle", "high")
MAXDIST_FACTORS = (1.1, 1.5, 2.0)
TAUS = (1.1, 1.5, 2.0, 2.5, 3.0)
ALPHAS = (0.75, 0.80, 0.85, 0.90, 0.95, 1.00)

GROUPINGS = ("sample_size", "density", "maxdist_factor", "tuning")


def simulate_gaussian_field(locations, params: ExpVariogramParams, rng: np.random.Generator) -> np.ndarray:
    """One draw of the zero-mean Gaussian process at ``locations``."""
    C = build_covariance_matrix(np.asarray(locations, dtype=float), params)
    L = cholesky_lower(C, params.sill)
    return L @ rng.standard_normal(C.shape[0])


def sample_locations(n: int, density: str, rng: np.random.Generator,
                     sides: dict | None = None, extent: float = DOMAIN_SIDE) -> np.ndarray:
    """Uniform locations on a square centred in ``[0, extent]^2``.

    The square's side depends on ``density``: the full domain for ``low``,
    smaller centred squares for ``middle`` and ``high`` so that more pairs
    fall at short distances.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    side = (sides or DENSITY_SIDES)[density]
    lo = 0.5 * (extent - side)
    return lo + side * rng.random((n, 2))


def relative_bias(params: ExpVariogramParams, sample_var: float) -> float:
    """Model variance ``c0 + sigma2`` over the sample variance."""
    if not sample_var > 0:
        raise ValueError("sample variance must be positive")
    return params.sill / sample_var


@dataclass(frozen=True)
class Scenario:
    """One cell of the simulation grid.  ``B = 0`` fits and screens only."""

    n: int
    density: str = "low"
    maxdist_factor: float = 1.5
    filter: CheckFilter | QuantileFilter | None = None
    n_sim: int = 100
    B: int = 200
    seed: int = 0
    n_lags: int = 10
    true_params: ExpVariogramParams = TRUE_PARAMS
    max_attempts_factor: int = 50
    fit_cfg: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self):
        if self.density not in DENSITY_SIDES:
            raise ValueError(f"unknown density {self.density!r}")
        if self.n < 2 or self.n_sim < 1 or self.maxdist_factor <= 0:
            raise ValueError("n >= 2, n_sim >= 1 and maxdist_factor > 0 required")
        if self.B != 0 and self.B < 2:
            raise ValueError("B must be 0 (fit only) or >= 2")

    @property
    def method(self) -> str:
        return "none" if self.filter is None else self.filter.kind

    @property
    def tuning(self) -> float | None:
        f = self.filter
        if isinstance(f, CheckFilter):
            return f.tau
        if isinstance(f, QuantileFilter):
            return f.alpha
        return None

    @property
    def max_dist(self) -> float:
        return self.maxdist_factor * practical_range(self.true_params)

    def key(self) -> dict:
        return {
            "n": self.n, "density": self.density, "maxdist_factor": self.maxdist_factor,
            "method": self.method, "tuning": self.tuning, "B": self.B, "seed": self.seed,
        }


@dataclass(frozen=True)
class RunRecord:
    run: int
    theta_hat: tuple
    passes_screen: bool
    se: tuple = (math.nan, math.nan, math.nan)
    n_generated: int = 0
    n_discarded_filter: int = 0
    n_discarded_screen: int = 0
    status: str = "ok"


@dataclass(frozen=True)
class PerformanceStats:
    eta: float
    eta_mc_se: float
    eta_hat_mean: float
    eta_hat_sd: float
    bias: float
    mse: float
    convergence_rate: float

    @classmethod
    def from_moments(cls, eta, eta_mc_se, eta_hat_mean, eta_hat_sd, convergence_rate):
        bias = eta_hat_mean - eta
        return cls(eta, eta_mc_se, eta_hat_mean, eta_hat_sd, bias,
                   eta_hat_sd ** 2 + bias ** 2, convergence_rate)


STAT_FIELDS = ("eta", "eta_mc_se", "eta_hat_mean", "eta_hat_sd", "bias", "mse", "convergence_rate")


def mc_standard_error(sd: float, n_ok: int) -> float:
    """Monte Carlo standard error of an empirical standard deviation."""
    return sd / math.sqrt(2 * (n_ok - 1)) if n_ok > 1 else math.nan


def _sd(x) -> float:
    return float(np.std(x, ddof=1)) if len(x) > 1 else math.nan


def performance_from_runs(runs, n_sim: int | None = None) -> dict:
    """Per-parameter :class:`PerformanceStats` from the run records of one scenario."""
    n_sim = len(runs) if n_sim is None else n_sim
    screened = [r for r in runs if r.passes_screen]
    with_se = [r for r in screened if r.status == "ok"]
    rate = len(screened) / n_sim
    out = {}
    for j, name in enumerate(PARAM_NAMES):
        eta = _sd([r.theta_hat[j] for r in screened])
        se = [r.se[j] for r in with_se]
        out[name] = PerformanceStats.from_moments(
            eta, mc_standard_error(eta, len(screened)),
            float(np.mean(se)) if se else math.nan, _sd(se), rate,
        )
    return out


@dataclass
class ScenarioResult:
    scenario: Scenario
    runs: list
    stats: dict = None

    def __post_init__(self):
        if self.stats is None:
            self.stats = performance_from_runs(self.runs, self.scenario.n_sim)

    @property
    def convergence_rate(self) -> float:
        return sum(r.passes_screen for r in self.runs) / self.scenario.n_sim


def _data_key(sc: Scenario, run: int):
    return (sc.seed, sc.n, list(DENSITY_SIDES).index(sc.density), run)


def simulate_dataset(sc: Scenario, run: int) -> SpatialDataset:
    """Dataset of run ``run``; independent of the filter and maxdist settings."""
    key = _data_key(sc, run)
    coords = sample_locations(sc.n, sc.density, rng_for(*key, 0))
    z = simulate_gaussian_field(coords, sc.true_params, rng_for(*key, 1))
    return SpatialDataset(coords, z)


def _run_once(sc: Scenario, run: int) -> RunRecord:
    data = simulate_dataset(sc, run)
    grid = LagGrid(sc.max_dist, sc.n_lags)
    try:
        fit = fit_wls(empirical_variogram(data, grid), sc.fit_cfg)
    except InsufficientBins:
        return RunRecord(run, (math.nan,) * 3, False, status="insufficient_bins")
    theta = tuple(float(v) for v in fit.params.as_array())
    if not fit.passes_screen:
        return RunRecord(run, theta, False, status="screen_failed")
    if sc.B == 0:
        return RunRecord(run, theta, True, status="fit_only")
    boot_seed = int(rng_for(*_data_key(sc, run), 2).integers(0, 2**63))
    cfg = BootstrapConfig(B=sc.B, filter=sc.filter, seed=boot_seed,
                          max_attempts_factor=sc.max_attempts_factor, fit_cfg=sc.fit_cfg)
    try:
        boot = run_generalized_bootstrap(data, grid, cfg)
    except BaseFitFailed:
        return RunRecord(run, theta, True, status="base_fit_failed")
    except AttemptBudgetExhausted as e:
        return RunRecord(run, theta, True, n_generated=e.n_generated,
                         n_discarded_filter=e.n_discarded_filter,
                         n_discarded_screen=e.n_discarded_screen, status="budget_exhausted")
    except NotPositiveDefinite:
        return RunRecord(run, theta, True, status="not_positive_definite")
    return RunRecord(run, theta, True, tuple(float(v) for v in boot.se), boot.n_generated,
                     boot.n_discarded_filter, boot.n_discarded_screen, "ok")


def _run_item(item):
    sc, run = item
    return _run_once(sc, run)


def run_scenarios(scenarios, workers: int = 1) -> list:
    """Run every scenario; runs are spread over ``workers`` processes."""
    scenarios = list(scenarios)
    items = [(sc, r) for sc in scenarios for r in range(sc.n_sim)]
    records = ordered_map(_run_item, items, workers=workers)
    out, pos = [], 0
    for sc in scenarios:
        out.append(ScenarioResult(sc, records[pos:pos + sc.n_sim]))
        pos += sc.n_sim
    return out


def run_scenario(sc: Scenario, workers: int = 1) -> ScenarioResult:
    return run_scenarios([sc], workers)[0]


def scenario_grid(sample_sizes=SAMPLE_SIZES, densities=DENSITIES, maxdist_factors=MAXDIST_FACTORS,
                  filters=None, **kw) -> list:
    if filters is None:
        filters = [CheckFilter(t) for t in TAUS]
    return [Scenario(n=n, density=d, maxdist_factor=m, filter=f, **kw)
            for n in sample_sizes for d in densities for m in maxdist_factors for f in filters]


def group_value(sc: Scenario, group_by: str):
    return {
        "sample_size": sc.n,
        "density": sc.density,
        "maxdist_factor": sc.maxdist_factor,
        "tuning": sc.tuning,
    }[group_by]


class EmptyGroup(ValueError):
    pass


def grouped_report(results, group_by: str) -> list:
    """Average scenario statistics within each ``(method, group value)``.

    Standard deviations and bias are averaged; the MSE is recomputed from the
    averaged values so that ``mse = sd**2 + bias**2`` holds row by row.

    Returns
    -------
    list of dict
        One row per method, group value and parameter.
    """
    if group_by not in GROUPINGS:
        raise ValueError(f"group_by must be one of {GROUPINGS}")
    results = list(results)
    if not results:
        raise EmptyGroup("no scenario results to group")

    def sort_key(res):
        v = group_value(res.scenario, group_by)
        order = DENSITIES.index(v) if group_by == "density" else (math.inf if v is None else v)
        return (res.scenario.method, order)

    rows = []
    for (method, _), members in groupby(sorted(results, key=sort_key), key=sort_key):
        members = list(members)
        for name in PARAM_NAMES:
            stats = [m.stats[name] for m in members]

            def avg(attr):
                vals = [getattr(s, attr) for s in stats]
                return math.fsum(vals) / len(vals)

            ps = PerformanceStats.from_moments(avg("eta"), avg("eta_mc_se"), avg("eta_hat_mean"),
                                               avg("eta_hat_sd"), avg("convergence_rate"))
            rows.append({
                "method": method,
                "parameter": name,
                "group_by": group_by,
                "group": group_value(members[0].scenario, group_by),
                "n_scenarios": len(members),
                **{f: getattr(ps, f) for f in STAT_FIELDS},
            })
    return rows


RUN_COLUMNS = (
    "n", "density", "maxdist_factor", "method", "tuning", "B", "seed", "n_sim", "run",
    "c0_hat", "sigma2_hat", "phi_hat", "passes_screen", "se_c0", "se_sigma2", "se_phi",
    "n_generated", "n_discarded_filter", "n_discarded_screen", "status",
)
PERFORMANCE_COLUMNS = ("method", "parameter", "group_by", "group", "n_scenarios") + STAT_FIELDS


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_runs_csv(path, results) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUN_COLUMNS)
        for res in results:
            key = res.scenario.key()
            for r in res.runs:
                w.writerow([_fmt(v) for v in (
                    key["n"], key["density"], key["maxdist_factor"], key["method"], key["tuning"],
                    key["B"], key["seed"], res.scenario.n_sim, r.run, *r.theta_hat,
                    r.passes_screen, *r.se, r.n_generated, r.n_discarded_filter,
                    r.n_discarded_screen, r.status,
                )])


def write_performance_csv(dest, rows) -> None:
    """Write grouped rows to a path or an open text stream."""
    if hasattr(dest, "write"):
        w = csv.DictWriter(dest, fieldnames=PERFORMANCE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row[k]) for k in PERFORMANCE_COLUMNS})
        return
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        write_performance_csv(fh, rows)


def _make_filter(method: str, tuning):
    if method == "check":
        return CheckFilter(float(tuning))
    if method == "quantile":
        return QuantileFilter(float(tuning))
    return None


def read_runs_csv(path) -> list:
    """Rebuild :class:`ScenarioResult` objects from a ``runs.csv`` file."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    missing = set(RUN_COLUMNS) - set(rows[0] if rows else RUN_COLUMNS)
    if missing:
        raise ValueError(f"runs file lacks columns {sorted(missing)}")
    key_cols = ("n", "density", "maxdist_factor", "method", "tuning", "B", "seed", "n_sim")
    grouped = {}
    for row in rows:
        grouped.setdefault(tuple(row[c] for c in key_cols), []).append(row)
    results = []
    for k, group in grouped.items():
        kd = dict(zip(key_cols, k))
        sc = Scenario(
            n=int(kd["n"]), density=kd["density"], maxdist_factor=float(kd["maxdist_factor"]),
            filter=_make_filter(kd["method"], kd["tuning"]), n_sim=int(kd["n_sim"]),
            B=int(kd["B"]), seed=int(kd["seed"]),
        )
        runs = [
            RunRecord(
                run=int(r["run"]),
                theta_hat=tuple(float(r[c]) for c in ("c0_hat", "sigma2_hat", "phi_hat")),
                passes_screen=r["passes_screen"] == "true",
                se=tuple(float(r[c]) for c in ("se_c0", "se_sigma2", "se_phi")),
                n_generated=int(r["n_generated"]),
                n_discarded_filter=int(r["n_discarded_filter"]),
                n_discarded_screen=int(r["n_discarded_screen"]),
                status=r["status"],
            )
            for r in group
        ]
        results.append(ScenarioResult(sc, runs))
    return results


def metaparameter_sweep(data: SpatialDataset, max_dists, n_lags_list, cfg: FitConfig | None = None) -> list:
    """Fit every ``(max_dist, n_lags)`` combination and report loss and relative bias.

    Used to choose the binning for a real dataset before bootstrapping.
    """
    var = sample_variance(data)
    rows = []
    for md in max_dists:
        for k in n_lags_list:
            row = {"max_dist": float(md), "n_lags": int(k)}
            try:
                fit = fit_wls(empirical_variogram(data, LagGrid(md, k)), cfg)
            except InsufficientBins as e:
                row.update(error=str(e))
                rows.append(row)
                continue
            row.update(fit.params.to_dict(), loss=fit.loss_value,
                       relative_bias=relative_bias(fit.params, var),
                       passes_screen=fit.passes_screen)
            rows.append(row)
    return rows
