"""Weighted least squares fit of the exponential model to an empirical variogram.

The loss weights every lag by its pair count.  Minimisation is a Nelder-Mead
simplex search over log-parameters, which keeps all three components positive
without bound constraints.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import AllBinsEmpty, InsufficientBins
from .model import ExpVariogramParams
from .spatial import EmpiricalVariogram

# keeps exp() finite while the simplex wanders
_LOG_BOUND = 60.0
# initial simplex edge in log-parameter space
_SIMPLEX_STEP = 0.25


@dataclass(frozen=True)
class FitConfig:
    screen_threshold: float = 1000.0
    max_iterations: int = 2000
    rel_tolerance: float = 1e-8
    n_restarts: int = 3

    def __post_init__(self):
        if not (self.screen_threshold > 0 and self.max_iterations > 0
                and self.rel_tolerance > 0 and self.n_restarts > 0):
            raise ValueError("FitConfig fields must all be positive")


@dataclass(frozen=True)
class FitResult:
    params: ExpVariogramParams
    loss_value: float
    n_iterations: int
    converged_numerically: bool
    passes_screen: bool

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "loss": self.loss_value,
            "n_iterations": self.n_iterations,
            "converged_numerically": self.converged_numerically,
            "passes_screen": self.passes_screen,
        }


def passes_screen(params: ExpVariogramParams, threshold: float = 1000.0) -> bool:
    """Convergence screen: every component strictly below ``threshold``."""
    return bool(params.nugget < threshold and params.partial_sill < threshold
                and params.shape < threshold)


def _arrays(ev: EmpiricalVariogram):
    keep = ev.nonempty
    if not keep.any():
        raise AllBinsEmpty("empirical variogram has no nonempty bin")
    return ev.distances[keep], ev.gamma_hat[keep], ev.pair_counts[keep].astype(float)


def _loss(p, d, g, w) -> float:
    c0, s, phi = p
    r = g - (c0 + s * -np.expm1(-d / phi))
    return float(w @ (r * r))


def wls_loss(params: ExpVariogramParams, ev: EmpiricalVariogram) -> float:
    """Pair-count weighted squared deviation over the nonempty lags."""
    d, g, w = _arrays(ev)
    return _loss(params.as_array(), d, g, w)


def _initial_guess(d, g, max_dist) -> np.ndarray:
    if len(g) < 2:
        raise InsufficientBins(f"need at least two nonempty bins, got {len(g)}")
    order = np.argsort(d, kind="stable")
    g = g[order]
    tail = g[-max(1, len(g) // 3):]
    total = float(np.mean(tail))
    floor = max(1e-6 * abs(total), 1e-12)
    nugget = max(float(g[0]), floor)
    psill = max(total - nugget, floor)
    return np.array([nugget, psill, max_dist / 3.0])


def initial_guess(ev: EmpiricalVariogram) -> ExpVariogramParams:
    """Starting point: first-lag nugget, tail-mean sill, shape ``max_dist / 3``."""
    d, g, _ = _arrays(ev)
    return ExpVariogramParams.from_array(_initial_guess(d, g, ev.grid.max_dist))


def _restart_points(x0: np.ndarray, n: int):
    yield x0
    for r in range(1, n):
        factors = np.array([2.0 if (j + r) % 2 == 0 else 0.5 for j in range(3)])
        yield x0 * factors


def fit_arrays(distances, gamma, counts, max_dist, cfg: FitConfig | None = None) -> FitResult:
    """Fit on raw per-lag arrays; empty lags (count 0) are ignored.

    Lags are put in ascending distance order first, so the result does not
    depend on how the arrays are ordered.
    """
    cfg = cfg or FitConfig()
    d = np.asarray(distances, dtype=float)
    g = np.asarray(gamma, dtype=float)
    w = np.asarray(counts, dtype=float)
    keep = w > 0
    d, g, w = d[keep], g[keep], w[keep]
    if len(d) < 3:
        raise InsufficientBins(f"need at least three nonempty bins, got {len(d)}")
    order = np.argsort(d, kind="stable")
    d, g, w = d[order], g[order], w[order]

    neg_d = -d

    def objective(lp):
        c0, s, phi = (math.exp(min(max(v, -_LOG_BOUND), _LOG_BOUND)) for v in lp)
        r = g - c0 + s * np.expm1(neg_d / phi)
        v = float(w @ (r * r))
        return v if math.isfinite(v) else math.inf

    x0 = _initial_guess(d, g, max_dist)
    best = None
    for start in _restart_points(x0, cfg.n_restarts):
        ls = np.log(start)
        simplex = np.vstack([ls, ls + _SIMPLEX_STEP * np.eye(3)])
        fatol = cfg.rel_tolerance * max(objective(ls), 1e-300)
        res = minimize(
            objective, ls, method="Nelder-Mead",
            options={"initial_simplex": simplex, "xatol": cfg.rel_tolerance, "fatol": fatol,
                     "maxiter": cfg.max_iterations, "maxfev": 4 * cfg.max_iterations},
        )
        if best is None or res.fun < best.fun:
            best = res
    p = ExpVariogramParams.from_array(np.exp(np.clip(best.x, -_LOG_BOUND, _LOG_BOUND)))
    return FitResult(
        params=p,
        loss_value=float(best.fun),
        n_iterations=int(best.nit),
        converged_numerically=bool(best.success),
        passes_screen=passes_screen(p, cfg.screen_threshold),
    )


def fit_wls(ev: EmpiricalVariogram, cfg: FitConfig | None = None) -> FitResult:
    """Best-of-``cfg.n_restarts`` WLS fit of the exponential model to ``ev``.

    A run that hits ``max_iterations`` is still returned, flagged with
    ``converged_numerically=False``.

    Raises
    ------
    InsufficientBins
        Fewer than three nonempty lags.
    """
    return fit_arrays(ev.distances, np.nan_to_num(ev.gamma_hat), ev.pair_counts,
                      ev.grid.max_dist, cfg)
