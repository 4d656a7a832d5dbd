"""Exponential semi-variogram fitting with filtered generalized bootstrap standard errors."""

from .bootstrap import (
    BootstrapConfig, BootstrapRun, CheckFilter, QuantileFilter, build_covariance_matrix,
    check_filter_accepts, decorrelate, quantile_filter, recorrelate, resample,
    run_generalized_bootstrap, se_from_replicates,
)
from .fitting import FitConfig, FitResult, fit_wls, initial_guess, wls_loss
from .model import ExpVariogramParams, eval_model, model_covariance, practical_range
from .nscore import NormalScoreTable, nscore_forward, nscore_inverse
from .spatial import (
    EmpiricalVariogram, LagGrid, SpatialDataset, empirical_variogram, pairwise_distances,
    read_points_csv, sample_variance,
)
from .study import (
    PerformanceStats, Scenario, ScenarioResult, grouped_report, relative_bias, run_scenario,
    sample_locations, simulate_gaussian_field,
)

__version__ = "0.1.0"
