"""Generalized bootstrap for exponential variogram parameter standard errors.

The data are normal-score transformed, decorrelated with the Cholesky factor
of a model covariance matrix, resampled with replacement, recorrelated,
back-transformed and refitted.  Implausible replicate fits are removed by a
check filter (model sill against the sample variance) or a quantile filter
(drop the upper tail of each parameter).
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist

from ._parallel import ordered_map, rng_for
from .errors import AttemptBudgetExhausted, BaseFitFailed, LengthMismatch, NotPositiveDefinite
from .fitting import FitConfig, fit_wls
from .model import ExpVariogramParams, model_covariance
from .nscore import NormalScoreTable, nscore_forward, nscore_inverse
from .spatial import LagBinning, LagGrid, SpatialDataset, sample_variance

log = logging.getLogger(__name__)

PARAM_NAMES = ("nugget", "partial_sill", "shape")
JITTER = 1e-10


@dataclass(frozen=True)
class CheckFilter:
    """Reject a replicate whose model sill exceeds ``tau`` times the sample variance."""

    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")

    kind = "check"


@dataclass(frozen=True)
class QuantileFilter:
    """Keep, per parameter, the smallest ``B`` of ``ceil(B / alpha)`` replicates."""

    alpha: float

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")

    kind = "quantile"


@dataclass(frozen=True)
class BootstrapConfig:
    B: int = 1000
    filter: CheckFilter | QuantileFilter | None = None
    seed: int = 0
    max_attempts_factor: int = 50
    fit_cfg: FitConfig = field(default_factory=FitConfig)
    # discard replicate fits that fail the convergence screen before filtering
    screen_replicates: bool = False

    def __post_init__(self):
        if int(self.B) != self.B or self.B < 2:
            raise ValueError(f"B must be an integer >= 2, got {self.B}")
        if self.max_attempts_factor < 1:
            raise ValueError("max_attempts_factor must be >= 1")

    @property
    def n_target(self) -> int:
        """Number of screened replicates to collect before filtering."""
        if isinstance(self.filter, QuantileFilter):
            return quantile_sample_size(self.B, self.filter.alpha)
        return self.B

    def to_dict(self) -> dict:
        f = self.filter
        return {
            "B": self.B,
            "filter": "none" if f is None else f.kind,
            "tau": f.tau if isinstance(f, CheckFilter) else None,
            "alpha": f.alpha if isinstance(f, QuantileFilter) else None,
            "seed": self.seed,
            "max_attempts_factor": self.max_attempts_factor,
            "screen_threshold": self.fit_cfg.screen_threshold,
            "n_restarts": self.fit_cfg.n_restarts,
            "screen_replicates": self.screen_replicates,
        }


@dataclass
class BootstrapRun:
    """Outcome of one generalized bootstrap.

    ``retained`` has shape ``(B, 3)`` with columns nugget, partial sill,
    shape.  In quantile mode each column is filtered on its own, so a row
    need not come from a single replicate; ``generated`` then holds the
    ``ceil(B / alpha)`` screened replicates before filtering.
    """

    theta_hat: ExpVariogramParams
    theta_tilde: ExpVariogramParams
    retained: np.ndarray
    se: np.ndarray
    n_generated: int
    n_discarded_filter: int
    n_discarded_screen: int
    config: BootstrapConfig
    sample_variance: float
    generated: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat.to_dict(),
            "theta_tilde": self.theta_tilde.to_dict(),
            "se": dict(zip(PARAM_NAMES, map(float, self.se))),
            "replicate_mean": dict(zip(PARAM_NAMES, map(float, self.retained.mean(axis=0)))),
            "sample_variance": self.sample_variance,
            "n_generated": self.n_generated,
            "n_discarded_filter": self.n_discarded_filter,
            "n_discarded_screen": self.n_discarded_screen,
            "config": self.config.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def build_covariance_matrix(data, params: ExpVariogramParams) -> np.ndarray:
    """Model covariance between every pair of locations.

    ``data`` is a :class:`SpatialDataset` or an ``(N, 2)`` coordinate array.
    """
    coords = data.coords if isinstance(data, SpatialDataset) else np.asarray(data, dtype=float)
    return model_covariance(params, cdist(coords, coords))


def cholesky_lower(C: np.ndarray, variance: float | None = None) -> np.ndarray:
    """Lower Cholesky factor, retrying once with a small diagonal jitter.

    Raises
    ------
    NotPositiveDefinite
        If the jittered matrix still cannot be factorised.
    """
    try:
        return np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        pass
    if variance is None:
        variance = float(np.max(np.diag(C)))
    eps = JITTER * variance
    log.warning("covariance matrix not positive definite, adding jitter %g", eps)
    try:
        return np.linalg.cholesky(C + eps * np.eye(C.shape[0]))
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("covariance matrix not positive definite after jitter") from None


def decorrelate(C: np.ndarray, y, variance: float | None = None):
    """Factor ``C = L L^T`` and solve ``L x = y`` by forward substitution."""
    L = cholesky_lower(C, variance)
    x = solve_triangular(L, np.asarray(y, dtype=float), lower=True, check_finite=False)
    return L, x


def recorrelate(L: np.ndarray, x_star) -> np.ndarray:
    return L @ np.asarray(x_star, dtype=float)


def resample(x, rng: np.random.Generator) -> np.ndarray:
    """Draw ``len(x)`` elements of ``x`` uniformly with replacement."""
    x = np.asarray(x)
    return x[rng.integers(0, x.shape[0], size=x.shape[0])]


def check_filter_accepts(theta_star: ExpVariogramParams, tau: float, sample_var: float) -> bool:
    # equality is retained
    return not (theta_star.nugget + theta_star.partial_sill > tau * sample_var)


def quantile_sample_size(B: int, alpha: float) -> int:
    # the small offset absorbs float error, e.g. 100 / 0.8 = 125.00000000000001
    return math.ceil(B / alpha - 1e-9)


def quantile_filter(estimates, alpha: float, B: int) -> np.ndarray:
    """Keep the ``B`` smallest values of each column of ``estimates``.

    ``estimates`` has shape ``(ceil(B / alpha), n_params)``; the result has
    shape ``(B, n_params)`` with every column sorted ascending.
    """
    est = np.asarray(estimates, dtype=float)
    expected = quantile_sample_size(B, alpha)
    if est.shape[0] != expected:
        raise LengthMismatch(f"expected {expected} estimates for B={B}, alpha={alpha}, got {est.shape[0]}")
    return np.sort(est, axis=0, kind="stable")[:B]


def se_from_replicates(retained) -> np.ndarray | float:
    """Sample standard deviation (divisor ``B - 1``) along the first axis."""
    r = np.asarray(retained, dtype=float)
    if r.shape[0] < 2:
        raise ValueError("need at least two replicates")
    se = np.std(r, axis=0, ddof=1)
    return float(se) if np.ndim(se) == 0 else se


@dataclass(frozen=True)
class _ReplicateContext:
    L: np.ndarray
    x: np.ndarray
    table: NormalScoreTable
    binning: LagBinning
    seed: int
    fit_cfg: FitConfig


def _replicate(ctx: _ReplicateContext, b: int):
    x_star = resample(ctx.x, rng_for(ctx.seed, b))
    z_star = nscore_inverse(recorrelate(ctx.L, x_star), ctx.table)
    fit = fit_wls(ctx.binning.variogram(z_star), ctx.fit_cfg)
    return fit.params.as_array(), fit.passes_screen


def run_generalized_bootstrap(data: SpatialDataset, grid: LagGrid, cfg: BootstrapConfig,
                              workers: int = 1) -> BootstrapRun:
    """Standard errors of the WLS exponential fit by filtered generalized bootstrap.

    Replicate ``b`` draws from its own random stream keyed by ``(seed, b)``
    and replicates are accepted in index order, so the result is identical
    for any ``workers``.

    Raises
    ------
    BaseFitFailed
        The fit on the data or on its normal scores fails the screen.
    AttemptBudgetExhausted
        Fewer than the required replicates survived within
        ``max_attempts_factor`` times the target number of attempts.
    """
    fit_cfg = cfg.fit_cfg
    binning = LagBinning(data.coords, grid)
    base = fit_wls(binning.variogram(data.values), fit_cfg)
    if not base.passes_screen:
        raise BaseFitFailed("original", base)

    y, table = nscore_forward(data.values)
    ns_fit = fit_wls(binning.variogram(y), fit_cfg)
    if not ns_fit.passes_screen:
        raise BaseFitFailed("normal-score", ns_fit)
    theta_tilde = ns_fit.params

    C = build_covariance_matrix(data, theta_tilde)
    L, x = decorrelate(C, y, theta_tilde.sill)

    var_z = sample_variance(data)
    check = cfg.filter if isinstance(cfg.filter, CheckFilter) else None
    target = cfg.n_target
    budget = target * cfg.max_attempts_factor
    ctx = _ReplicateContext(L, x, table, binning, cfg.seed, fit_cfg)

    accepted = []
    n_tried = n_filter = n_screen = 0
    while len(accepted) < target and n_tried < budget:
        batch = range(n_tried, min(n_tried + target - len(accepted), budget))
        for theta, ok in ordered_map(_replicate, batch, args=(ctx,), workers=workers):
            n_tried += 1
            if cfg.screen_replicates and not ok:
                n_screen += 1
            elif check is not None and not check_filter_accepts(
                    ExpVariogramParams.from_array(theta), check.tau, var_z):
                n_filter += 1
            else:
                accepted.append(theta)
    if len(accepted) < target:
        raise AttemptBudgetExhausted(len(accepted), n_tried, n_filter, n_screen)

    estimates = np.array(accepted)
    generated = None
    if isinstance(cfg.filter, QuantileFilter):
        generated = estimates
        retained = quantile_filter(estimates, cfg.filter.alpha, cfg.B)
        n_generated = target
    else:
        retained = estimates
        n_generated = n_tried
    return BootstrapRun(
        theta_hat=base.params,
        theta_tilde=theta_tilde,
        retained=retained,
        se=se_from_replicates(retained),
        n_generated=n_generated,
        n_discarded_filter=n_filter,
        n_discarded_screen=n_screen,
        config=cfg,
        sample_variance=var_z,
        generated=generated,
    )
