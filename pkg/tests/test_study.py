import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import pdist

from vgboot.bootstrap import CheckFilter, QuantileFilter
from vgboot.model import ExpVariogramParams
from vgboot.spatial import SpatialDataset
from vgboot.study import (
    EmptyGroup, PERFORMANCE_COLUMNS, PerformanceStats, RunRecord, Scenario, ScenarioResult, STAT_FIELDS,
    TRUE_PARAMS, grouped_report, mc_standard_error, metaparameter_sweep, performance_from_runs,
    read_runs_csv, relative_bias, run_scenario, run_scenarios, sample_locations, simulate_dataset,
    simulate_gaussian_field, write_performance_csv, write_runs_csv,
)


def test_single_point_variance_and_mean():
    rng = np.random.default_rng(123)
    draws = np.array([simulate_gaussian_field([[5.0, 5.0]], TRUE_PARAMS, rng)[0] for _ in range(10_000)])
    assert abs(draws.var(ddof=1) / 100 - 1) < 0.05
    assert abs(draws.mean()) < 3 * 10 / math.sqrt(len(draws))


def test_far_points_uncorrelated():
    rng = np.random.default_rng(7)
    pts = [[0.0, 0.0], [1e6, 0.0]]
    draws = np.array([simulate_gaussian_field(pts, TRUE_PARAMS, rng) for _ in range(5000)])
    r = np.corrcoef(draws.T)[0, 1]
    assert abs(r) < 4 / math.sqrt(5000)


def test_close_points_correlated():
    rng = np.random.default_rng(8)
    pts = [[0.0, 0.0], [200.0, 0.0]]
    draws = np.array([simulate_gaussian_field(pts, TRUE_PARAMS, rng) for _ in range(5000)])
    # covariance 40 e^-1 over variance 100
    assert np.corrcoef(draws.T)[0, 1] == pytest.approx(0.4 / math.e, abs=4 / math.sqrt(5000))


def test_field_is_reproducible():
    pts = sample_locations(50, "middle", np.random.default_rng(1))
    a = simulate_gaussian_field(pts, TRUE_PARAMS, np.random.default_rng(2))
    b = simulate_gaussian_field(pts, TRUE_PARAMS, np.random.default_rng(2))
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("density,lo,hi", [("low", 0, 10000), ("middle", 2500, 7500), ("high", 3750, 6250)])
def test_location_ranges(density, lo, hi):
    pts = sample_locations(2000, density, np.random.default_rng(0))
    assert pts.shape == (2000, 2)
    assert pts.min() >= lo and pts.max() <= hi


def test_median_distance_ordering():
    rng = np.random.default_rng(4)
    med = [np.median(pdist(sample_locations(1000, d, rng))) for d in ("low", "middle", "high")]
    assert med[0] > med[1] > med[2]


def test_mc_standard_error():
    assert mc_standard_error(10.0, 51) == pytest.approx(1.0)
    assert math.isnan(mc_standard_error(10.0, 1))


def test_reference_table_row():
    ps = PerformanceStats.from_moments(12.84, 0.1733, 13.44, 3.1176, 1.0)
    assert ps.bias == pytest.approx(0.60, abs=1e-9)
    ps = PerformanceStats.from_moments(12.84, 0.1733, 12.84 + 0.5971, 3.1176, 1.0)
    assert ps.mse == pytest.approx(10.076, abs=1e-3)


def test_relative_bias():
    assert relative_bias(ExpVariogramParams(60, 42, 1), 100.0) == pytest.approx(1.02)
    assert relative_bias(ExpVariogramParams(50, 50, 1), 100.0) == 1.0
    assert relative_bias(ExpVariogramParams(120, 84, 1), 200.0) == pytest.approx(1.02)
    with pytest.raises(ValueError):
        relative_bias(TRUE_PARAMS, 0.0)


def fake_result(seed, **scenario_kw):
    rnd = random.Random(seed)
    sc = Scenario(**{"n": 500, "n_sim": 12, "filter": CheckFilter(1.5), **scenario_kw})
    runs = []
    for r in range(sc.n_sim):
        ok = rnd.random() > 0.2
        theta = tuple(rnd.gauss(m, m / 5) for m in (60, 40, 200))
        se = tuple(rnd.uniform(5, 30) for _ in range(3)) if ok else (math.nan,) * 3
        runs.append(RunRecord(r, theta, ok, se, 200, 3, 0, "ok" if ok else "screen_failed"))
    return ScenarioResult(sc, runs)


def test_performance_from_runs_by_hand():
    runs = [
        RunRecord(0, (1.0, 2.0, 3.0), True, (0.5, 0.5, 0.5)),
        RunRecord(1, (3.0, 2.0, 5.0), True, (1.5, 0.5, 0.5)),
        RunRecord(2, (9e9, 9e9, 9e9), False, status="screen_failed"),
    ]
    stats = performance_from_runs(runs)
    s = stats["nugget"]
    assert s.eta == pytest.approx(math.sqrt(2))
    assert s.eta_hat_mean == 1.0 and s.eta_hat_sd == pytest.approx(math.sqrt(0.5))
    assert s.bias == pytest.approx(1 - math.sqrt(2))
    assert s.convergence_rate == pytest.approx(2 / 3)
    assert stats["partial_sill"].eta == 0.0


@given(st.integers(0, 10_000))
def test_stats_self_consistent(seed):
    for s in fake_result(seed).stats.values():
        assert s.mse == s.eta_hat_sd ** 2 + s.bias ** 2
        assert 0 <= s.convergence_rate <= 1


def test_grouped_singleton_equals_own_stats():
    res = fake_result(1)
    rows = grouped_report([res], "tuning")
    assert len(rows) == 3
    for row in rows:
        s = res.stats[row["parameter"]]
        for f in STAT_FIELDS:
            assert row[f] == pytest.approx(getattr(s, f), rel=1e-12)


def test_grouped_by_tuning_averages_cells():
    results = [fake_result(i, n=n, density=d, filter=CheckFilter(t))
               for i, (n, d, t) in enumerate([(500, "low", 1.1), (1000, "high", 1.1),
                                              (500, "low", 1.5), (2000, "middle", 1.5)])]
    rows = [r for r in grouped_report(results, "tuning") if r["parameter"] == "nugget"]
    assert [r["group"] for r in rows] == [1.1, 1.5]
    assert rows[0]["n_scenarios"] == 2
    assert rows[0]["eta"] == pytest.approx((results[0].stats["nugget"].eta + results[1].stats["nugget"].eta) / 2)
    for r in rows:
        assert r["mse"] == r["eta_hat_sd"] ** 2 + r["bias"] ** 2


@settings(max_examples=20, deadline=None)
@given(st.randoms())
def test_grouped_permutation_invariant(rnd):
    results = [fake_result(i, density=d, filter=f) for i, (d, f) in enumerate(
        [("low", CheckFilter(1.1)), ("high", CheckFilter(1.1)), ("middle", QuantileFilter(0.8)),
         ("low", QuantileFilter(0.9))])]
    shuffled = list(results)
    rnd.shuffle(shuffled)
    for g in ("sample_size", "density", "tuning"):
        assert grouped_report(shuffled, g) == grouped_report(results, g)


def test_grouped_empty():
    with pytest.raises(EmptyGroup):
        grouped_report([], "density")


def test_dataset_independent_of_filter_and_maxdist():
    a = simulate_dataset(Scenario(n=100, filter=CheckFilter(1.1), maxdist_factor=1.1), 3)
    b = simulate_dataset(Scenario(n=100, filter=QuantileFilter(0.9), maxdist_factor=2.0), 3)
    np.testing.assert_array_equal(a.values, b.values)


def test_small_scenario_end_to_end(tmp_path):
    sc = Scenario(n=150, n_sim=3, B=10, filter=CheckFilter(2.0), seed=5)
    res = run_scenario(sc)
    assert len(res.runs) == 3
    for r in res.runs:
        if r.status == "ok":
            assert r.n_generated == 10 + r.n_discarded_filter + r.n_discarded_screen
    path = tmp_path / "runs.csv"
    write_runs_csv(path, [res])
    back = read_runs_csv(path)[0]
    assert back.scenario == sc
    assert repr(back.runs) == repr(res.runs)
    for name in res.stats:
        for f in STAT_FIELDS:
            x, y = getattr(res.stats[name], f), getattr(back.stats[name], f)
            assert x == y or (math.isnan(x) and math.isnan(y))


def test_runs_independent_of_workers():
    scs = [Scenario(n=120, n_sim=2, B=0, seed=9), Scenario(n=120, n_sim=2, B=0, seed=9, density="high")]
    a = run_scenarios(scs, workers=1)
    b = run_scenarios(scs, workers=2)
    # repr, since fit-only runs carry NaN standard errors
    assert repr([r.runs for r in a]) == repr([r.runs for r in b])


def test_performance_csv_columns(tmp_path):
    rows = grouped_report([fake_result(0)], "sample_size")
    path = tmp_path / "p.csv"
    write_performance_csv(path, rows)
    header = path.read_text().splitlines()[0].split(",")
    assert tuple(header) == PERFORMANCE_COLUMNS
    assert set(STAT_FIELDS) <= set(header)


def test_metaparameter_sweep():
    rng = np.random.default_rng(0)
    coords = sample_locations(300, "low", rng)
    data = SpatialDataset(coords, simulate_gaussian_field(coords, TRUE_PARAMS, rng))
    rows = metaparameter_sweep(data, [500, 900], [5, 10])
    assert len(rows) == 4
    for row in rows:
        assert row["relative_bias"] > 0 and row["loss"] >= 0
