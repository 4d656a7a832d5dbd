import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import vgboot.bootstrap as bs
from vgboot.bootstrap import (
    BootstrapConfig, CheckFilter, QuantileFilter, build_covariance_matrix, check_filter_accepts,
    cholesky_lower, decorrelate, quantile_filter, quantile_sample_size, recorrelate, resample,
    run_generalized_bootstrap, se_from_replicates,
)
from vgboot.errors import AttemptBudgetExhausted, BaseFitFailed, LengthMismatch
from vgboot.fitting import FitConfig
from vgboot.model import ExpVariogramParams
from vgboot.spatial import LagGrid, SpatialDataset
from vgboot.study import TRUE_PARAMS, sample_locations, simulate_gaussian_field

from oracles import hand_cholesky


def test_covariance_matrix():
    p = ExpVariogramParams(0.5, 0.5, 200)
    C = build_covariance_matrix(np.array([[0, 0], [200, 0], [1e7, 0]]), p)
    assert np.all(np.diag(C) == 1.0)
    assert C[0, 1] == pytest.approx(0.5 * math.exp(-1))
    assert C[0, 1] == pytest.approx(0.1839, abs=1e-4)
    assert C[0, 2] == 0.0
    np.testing.assert_array_equal(C, C.T)


def test_cholesky_identity():
    y = np.array([1.0, -2.0, 3.0])
    L, x = decorrelate(np.eye(3), y)
    np.testing.assert_array_equal(L, np.eye(3))
    np.testing.assert_array_equal(x, y)


def test_cholesky_hand():
    L = cholesky_lower(np.array([[1.0, 0.5], [0.5, 1.0]]))
    np.testing.assert_allclose(L, [[1, 0], [0.5, math.sqrt(0.75)]], rtol=1e-15)


def test_cholesky_matches_hand_oracle():
    rng = np.random.default_rng(2)
    coords = rng.random((12, 2)) * 300
    C = build_covariance_matrix(coords, ExpVariogramParams(0.3, 0.7, 100))
    np.testing.assert_allclose(cholesky_lower(C), hand_cholesky(C.tolist()), atol=1e-12)


def test_jitter_retry():
    # duplicated location without nugget-like diagonal slack: singular, fixable by jitter
    C = np.ones((2, 2))
    L = cholesky_lower(C, variance=1.0)
    assert np.allclose(L @ L.T, C, atol=1e-9)


def test_not_positive_definite():
    with pytest.raises(bs.NotPositiveDefinite):
        cholesky_lower(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_recorrelate_trivial():
    x = np.array([0.3, -1.2])
    np.testing.assert_array_equal(recorrelate(np.eye(2), x), x)
    np.testing.assert_array_equal(recorrelate(np.tril(np.ones((2, 2))), np.zeros(2)), np.zeros(2))


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 200), st.integers(0, 2**32 - 1))
def test_round_trip_random_spd(n, seed):
    rng = np.random.default_rng(seed)
    p = ExpVariogramParams(*rng.uniform([0.05, 0.05, 1], [2, 2, 500]))
    C = build_covariance_matrix(rng.random((n, 2)) * 1000, p)
    y = rng.normal(size=n)
    L, x = decorrelate(C, y)
    assert np.max(np.abs(L @ L.T - C)) <= 1e-8
    assert np.max(np.abs(recorrelate(L, x) - y)) <= 1e-8


def test_resample():
    assert resample(np.array([4.2]), np.random.default_rng(0))[0] == 4.2
    x = np.arange(10.0)
    a = resample(x, np.random.default_rng(7))
    b = resample(x, np.random.default_rng(7))
    np.testing.assert_array_equal(a, b)
    assert set(a) <= set(x) and len(a) == 10


def test_check_filter():
    assert not check_filter_accepts(ExpVariogramParams(100, 60, 10), 1.5, 100.0)
    assert check_filter_accepts(ExpVariogramParams(100, 50, 10), 1.5, 100.0)
    assert check_filter_accepts(ExpVariogramParams(500, 500, 10), 1e6, 100.0)


def test_filter_configs():
    with pytest.raises(ValueError):
        CheckFilter(0)
    with pytest.raises(ValueError):
        QuantileFilter(0)
    with pytest.raises(ValueError):
        QuantileFilter(1.01)
    with pytest.raises(ValueError):
        BootstrapConfig(B=1)


def test_quantile_sizes():
    assert quantile_sample_size(100, 0.8) == 125
    assert quantile_sample_size(100, 1.0) == 100
    assert quantile_sample_size(10, 0.75) == 14


def test_quantile_filter_examples():
    np.testing.assert_array_equal(quantile_filter([3.0, 1.0, 2.0], 2 / 3, 2), [1.0, 2.0])
    est = np.random.default_rng(0).normal(size=(50, 3))
    np.testing.assert_array_equal(np.sort(quantile_filter(est, 1.0, 50), 0), np.sort(est, 0))
    with pytest.raises(LengthMismatch):
        quantile_filter(est, 0.8, 50)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 200), st.sampled_from([0.75, 0.8, 0.85, 0.9, 0.95, 1.0]), st.integers(0, 2**32 - 1))
def test_quantile_filter_per_component(B, alpha, seed):
    est = np.random.default_rng(seed).lognormal(size=(quantile_sample_size(B, alpha), 3))
    kept = quantile_filter(est, alpha, B)
    assert kept.shape == (B, 3)
    for j in range(3):
        assert kept[:, j].max() <= np.sort(est[:, j])[B - 1]
        assert kept[:, j].max() <= np.quantile(est[:, j], alpha) or B == est.shape[0]


def test_se_examples():
    assert se_from_replicates([1.0, 3.0]) == pytest.approx(math.sqrt(2))
    assert se_from_replicates([2.5] * 7) == 0.0
    np.testing.assert_allclose(se_from_replicates([[1, 0], [3, 0]]), [math.sqrt(2), 0])
    with pytest.raises(ValueError):
        se_from_replicates([1.0])


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=50), st.randoms())
def test_se_order_invariant(xs, rnd):
    ys = list(xs)
    rnd.shuffle(ys)
    assert se_from_replicates(ys) == pytest.approx(se_from_replicates(xs), rel=1e-9, abs=1e-9)


@pytest.fixture(scope="module")
def sim_data():
    rng = np.random.default_rng(20240501)
    coords = sample_locations(300, "low", rng)
    return SpatialDataset(coords, simulate_gaussian_field(coords, TRUE_PARAMS, rng))


GRID = LagGrid(1.5 * 599.15, 10)


def test_check_mode_invariants(sim_data):
    run = run_generalized_bootstrap(sim_data, GRID, BootstrapConfig(B=40, filter=CheckFilter(1.1), seed=3))
    assert run.retained.shape == (40, 3)
    assert np.all(run.retained[:, 0] + run.retained[:, 1] <= 1.1 * run.sample_variance)
    assert run.n_generated == 40 + run.n_discarded_filter + run.n_discarded_screen
    assert np.all(run.se >= 0)


def test_quantile_mode_invariants(sim_data):
    run = run_generalized_bootstrap(sim_data, GRID, BootstrapConfig(B=40, filter=QuantileFilter(0.8), seed=3))
    assert run.n_generated == 50 and run.generated.shape == (50, 3)
    assert run.retained.shape == (40, 3)
    assert np.all(run.retained.max(0) <= np.quantile(run.generated, 0.8, axis=0))


def test_alpha_one_equals_unfiltered(sim_data):
    a = run_generalized_bootstrap(sim_data, GRID, BootstrapConfig(B=30, filter=QuantileFilter(1.0), seed=5))
    b = run_generalized_bootstrap(sim_data, GRID, BootstrapConfig(B=30, filter=None, seed=5))
    np.testing.assert_array_equal(np.sort(a.retained, 0), np.sort(b.retained, 0))
    np.testing.assert_allclose(a.se, b.se, rtol=1e-12)


def test_deterministic_across_workers(sim_data):
    cfg = BootstrapConfig(B=20, filter=CheckFilter(1.5), seed=11)
    a = run_generalized_bootstrap(sim_data, GRID, cfg, workers=1)
    b = run_generalized_bootstrap(sim_data, GRID, cfg, workers=3)
    assert a.to_json() == b.to_json()
    np.testing.assert_array_equal(a.retained, b.retained)


def test_identical_replicates_give_zero_se(sim_data, monkeypatch):
    monkeypatch.setattr(bs, "resample", lambda x, rng: np.asarray(x))
    run = run_generalized_bootstrap(sim_data, GRID, BootstrapConfig(B=5, seed=0))
    np.testing.assert_array_equal(run.se, [0.0, 0.0, 0.0])


def test_budget_exhausted(sim_data):
    with pytest.raises(AttemptBudgetExhausted) as exc:
        run_generalized_bootstrap(sim_data, GRID,
                                  BootstrapConfig(B=5, filter=CheckFilter(1e-3), max_attempts_factor=2))
    assert exc.value.n_generated == 10 and exc.value.n_accepted == 0


def test_base_fit_failed(sim_data):
    cfg = BootstrapConfig(B=5, fit_cfg=FitConfig(screen_threshold=1.0))
    with pytest.raises(BaseFitFailed) as exc:
        run_generalized_bootstrap(sim_data, GRID, cfg)
    assert exc.value.stage == "original"


def test_replicate_screen_counts(sim_data):
    cfg = BootstrapConfig(B=20, seed=2, screen_replicates=True, fit_cfg=FitConfig(screen_threshold=300))
    run = run_generalized_bootstrap(sim_data, GRID, cfg)
    assert np.all(run.retained < 300)
    assert run.n_generated == 20 + run.n_discarded_screen


def test_json_schema(sim_data):
    run = run_generalized_bootstrap(sim_data, GRID, BootstrapConfig(B=10, filter=CheckFilter(2.0), seed=9))
    d = json.loads(run.to_json())
    assert d["config"]["seed"] == 9
    assert set(d["se"]) == {"nugget", "partial_sill", "shape"}
    for key in ("n_generated", "n_discarded_filter", "n_discarded_screen"):
        assert key in d
