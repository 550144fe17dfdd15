import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drcap.scenarios import (
    DataError,
    InsufficientDataError,
    ScenarioSet,
    Trace,
    assemble_scenarios,
    bootstrap_customers,
    build_prediction_errors,
    read_scenarios_csv,
    read_trace_csv,
    sample_cost_coeffs,
    split_days,
    symmetrized,
    synthetic_load_traces,
    synthetic_wind_trace,
    truncated_normal,
    write_scenarios_csv,
    write_trace_csv,
)

LO, HI = 1 / 144, 10 / 144


def test_constant_trace_mean_predictor():
    pe = build_prediction_errors(Trace(np.full(10, 5.0)), "mean")
    assert np.all(pe.delta == 0)


def test_alternating_trace_mean_predictor():
    pe = build_prediction_errors(Trace(np.array([4.0, 6, 4, 6])), "mean")
    assert pe.delta.tolist() == [-1, 1, -1, 1]
    assert (pe.lower, pe.upper) == (-1, 1)


def test_periodic_predictor_zero_mean_per_slot(rng):
    tr = Trace(rng.uniform(0, 3, 2 * 288))
    pe = build_prediction_errors(tr)
    assert np.abs(pe.delta.reshape(2, 288).mean(axis=0)).max() < 1e-12


def test_periodic_predictor_needs_a_day():
    with pytest.raises(InsufficientDataError):
        build_prediction_errors(Trace(np.ones(100)))
    with pytest.raises(ValueError):
        build_prediction_errors(Trace(np.ones(300)), "arima")


def test_trace_validation():
    with pytest.raises(DataError):
        Trace(np.array([1.0, -0.5]))
    with pytest.raises(DataError):
        Trace(np.array([1.0, np.nan]))


def test_bootstrap_counts_and_determinism():
    bases = synthetic_load_traces(3, 4, seed=1)
    a = bootstrap_customers(bases, 100, seed=9)
    b = bootstrap_customers(bases, 100, seed=9)
    assert len(a) == 300
    assert all(np.array_equal(x.series, y.series) for x, y in zip(a, b))
    assert all(len(x) == len(bases[0]) for x in a)
    # every block of a customer is one day of its base
    days = bases[0].series.reshape(4, 288)
    for cust in a[:5]:
        for blk in cust.series.reshape(4, 288):
            assert any(np.array_equal(blk, d) for d in days)


def test_bootstrap_rejects_empty():
    with pytest.raises(ValueError):
        bootstrap_customers([], 3, seed=0)
    with pytest.raises(ValueError):
        bootstrap_customers(synthetic_load_traces(1, 2, 0), 0, seed=0)


def test_cost_coeffs_zero_rsd():
    d = sample_cost_coeffs(20, (LO, HI), 0.0, 50, seed=3)
    assert np.all(d.train == d.a_tilde) and np.all(d.test == d.a_tilde)
    assert np.array_equal(d.a_hat, d.a_tilde)


def test_cost_coeffs_within_range():
    d = sample_cost_coeffs(30, (LO, HI), 0.3, 500, seed=4)
    for arr in (d.a_tilde, d.train, d.test):
        assert arr.min() >= LO and arr.max() <= HI
    assert not np.array_equal(d.train[:100], d.test[:100])


def test_cost_coeffs_rsd_statistics():
    # a range wide enough that truncation is negligible
    d = sample_cost_coeffs(10, (0.01, 100.0), 0.3, 10_000, seed=5, spread=0.01)
    rsd = d.train.std(axis=0) / d.train.mean(axis=0)
    assert np.all(np.abs(rsd - 0.3) < 0.05 * 0.3)


def test_cost_coeffs_invalid():
    with pytest.raises(ValueError):
        sample_cost_coeffs(3, (2.0, 1.0), 0.1, 5, 0)
    with pytest.raises(ValueError):
        sample_cost_coeffs(3, (0.0, 1.0), 0.1, 5, 0)
    with pytest.raises(ValueError):
        sample_cost_coeffs(3, (1.0, 2.0), -0.1, 5, 0)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1, 1), st.floats(0.1, 3), st.integers(0, 2**31))
def test_truncated_normal_bounds(mean, sd, seed):
    x = truncated_normal(np.random.default_rng(seed), mean, sd, -1.0, 1.0, (200,))
    assert x.min() >= -1 and x.max() <= 1


def test_truncated_normal_gives_up_on_empty_mass():
    with pytest.raises(RuntimeError):
        truncated_normal(np.random.default_rng(0), 50.0, 0.1, -1.0, 1.0, (3,))


def test_assemble_zero_wind(rng):
    err = rng.normal(size=(20, 3))
    s = assemble_scenarios(err, rng.normal(size=20), np.full((20, 3), 0.1), 0.0)
    assert np.all(s.delta_r == 0)
    assert np.allclose(s.D, err.sum(axis=1))


def test_assemble_scales_wind(rng):
    w = rng.uniform(-0.4, 0.3, 30)
    s = assemble_scenarios(rng.normal(size=(30, 2)), w, np.full((30, 2), 0.1), 100.0)
    assert s.bounds.delta_r_hi - s.bounds.delta_r_lo == pytest.approx(100 * (w.max() - w.min()))


def test_assemble_misaligned(rng):
    with pytest.raises(ValueError):
        assemble_scenarios(rng.normal(size=(5, 2)), np.zeros(4), np.ones((5, 2)), 1.0)


def test_toy_moments_by_hand():
    s = ScenarioSet(np.array([[1.0, 2.0], [3.0, 0.0]]), np.array([1.0, -1.0]), np.ones((2, 2)), np.ones(2))
    m = s.moments
    assert m.mean.tolist() == [2.0, 1.0, 0.0]
    assert m.second.tolist() == [[5.0, 1.0, -1.0], [1.0, 2.0, 1.0], [-1.0, 1.0, 1.0]]
    assert s.D.tolist() == [2.0, 4.0]
    assert m.ED2 == pytest.approx(10.0)
    assert m.ED == pytest.approx(3.0)


def test_moment_consistency(small_set):
    m = small_set.moments
    assert m.ED2 == pytest.approx(np.mean(small_set.D**2), rel=1e-10)
    z = np.column_stack([small_set.delta, small_set.delta_r])
    assert np.allclose(m.second, z.T @ z / len(z), rtol=1e-10)
    assert np.allclose(m.ED_delta, (small_set.delta * small_set.D[:, None]).mean(axis=0))


def test_support_soundness(small_set):
    b = small_set.bounds
    assert np.all(small_set.delta >= b.delta_lo) and np.all(small_set.delta <= b.delta_hi)
    assert b.D_lo <= small_set.D.min() and small_set.D.max() <= b.D_hi


def test_scenario_iteration(small_set):
    sc = small_set[3]
    assert sc.D == pytest.approx(small_set.D[3])
    assert len(list(small_set)) == small_set.n_slots


def test_symmetrized_is_zero_mean(small_set):
    s = symmetrized(small_set)
    assert np.abs(s.moments.mean).max() < 1e-14
    assert np.allclose(s.bounds.delta_lo, -s.bounds.delta_hi)


def test_scenario_set_validation():
    with pytest.raises(DataError):
        ScenarioSet(np.ones((3, 2)), np.ones(2), np.ones((3, 2)), np.ones(2))
    with pytest.raises(DataError):
        ScenarioSet(np.ones((3, 2)), np.ones(3), np.ones((3, 2)), np.array([1.0, 0.0]))


def test_split_days():
    tr = Trace(np.arange(3 * 288, dtype=float))
    a, b = split_days(tr, [0, 2], [1])
    assert len(a) == 576 and b.series[0] == 288


def test_synthetic_traces_shape():
    w = synthetic_wind_trace(3, seed=1)
    assert len(w) == 864 and w.series.min() >= 0 and w.series.max() == pytest.approx(1.0)


def test_trace_csv_roundtrip(tmp_path):
    traces = synthetic_load_traces(2, 1, seed=0)
    p = tmp_path / "t.csv"
    write_trace_csv(traces, p)
    back = read_trace_csv(p)
    assert [t.source_id for t in back] == ["home0", "home1"]
    assert np.array_equal(back[0].series, traces[0].series)
    assert back[0].resolution == 300


def test_trace_csv_errors_report_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("timestamp,source_id,kw\n2017-01-01T00:00:00Z,h,1.0\n2017-01-01T00:05:00Z,h,abc\n")
    with pytest.raises(DataError, match=r"bad.csv:3"):
        read_trace_csv(p)
    p.write_text("timestamp,source_id,kw\n2017-01-01T00:00:00Z,h,1\n2017-01-01T00:05:00Z,h,1\n2017-01-01T00:15:00Z,h,1\n")
    with pytest.raises(DataError, match="gap"):
        read_trace_csv(p)
    with pytest.raises(DataError, match="cannot open"):
        read_trace_csv(tmp_path / "missing.csv")


def test_scenario_csv_roundtrip(tmp_path, small_set):
    p = tmp_path / "s.csv"
    write_scenarios_csv(small_set, p)
    back = read_scenarios_csv(p, small_set.a_hat)
    assert np.array_equal(back.delta, small_set.delta)
    assert np.array_equal(back.a, small_set.a)
    assert np.allclose(back.D, small_set.D)
