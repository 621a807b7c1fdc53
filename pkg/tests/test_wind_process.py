from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from storval import _parallel
from storval.wind_process import (
    Beta,
    PiecewiseLinear,
    TraceFormatError,
    TruncatedNormal,
    Uniform,
    WindProcessSpec,
    cdf,
    empirical_quantile,
    marginal_from_dict,
    order_stat_rank,
    parse_trace_csv,
    quantile,
    read_trace_csv,
    sample_path,
    sample_paths,
    time_avg_cdf,
    write_trace_csv,
)

TWO_ROW = WindProcessSpec.empirical([[0.2, 0.8], [0.6, 0.4]])


def test_uniform_cdf_value(uniform24):
    assert cdf(uniform24, 0, 0.3) == pytest.approx(0.3)


@pytest.mark.parametrize("spec", [WindProcessSpec.iid(Beta(2, 5), 3), TWO_ROW])
def test_cdf_outside_support(spec):
    assert cdf(spec, 0, -0.1) == 0.0
    assert cdf(spec, 1, 1.0) == 1.0


def test_empirical_column_cdf():
    assert cdf(TWO_ROW, 0, 0.5) == 0.5


def test_cdf_rejects_bad_period(uniform24):
    with pytest.raises(IndexError):
        cdf(uniform24, 24, 0.5)
    with pytest.raises(IndexError):
        cdf(uniform24, -1, 0.5)


def test_time_avg_cdf_examples(uniform24):
    assert time_avg_cdf(uniform24, 0.4) == pytest.approx(0.4)
    split = WindProcessSpec.nonstationary([Uniform(0.0, 0.5), Uniform(0.5, 1.0)])
    assert time_avg_cdf(split, 0.5) == pytest.approx(0.5)
    assert time_avg_cdf(split, 1.0) == 1.0
    assert time_avg_cdf(TWO_ROW, 1.0) == 1.0


def test_iid_time_average_matches_every_period(beta24):
    for x in np.linspace(-0.1, 1.1, 25):
        for k in (0, 11, 23):
            assert time_avg_cdf(beta24, x) == cdf(beta24, k, x)


def test_quantile_examples(uniform24):
    assert quantile(uniform24, 0.5) == 0.5
    assert quantile(uniform24, 1.0) == 1.0
    pooled = WindProcessSpec.empirical([[0.2, 0.8], [0.6, 0.4]])
    assert quantile(pooled, 0.5) == 0.4
    assert time_avg_cdf(pooled, 0.4) == 0.5


@pytest.mark.parametrize("gamma", [0.0, -0.1, 1.5])
def test_quantile_rejects_gamma(uniform24, gamma):
    with pytest.raises(ValueError):
        quantile(uniform24, gamma)


def test_quantile_is_smallest_double(beta24):
    x = quantile(beta24, 0.37)
    assert time_avg_cdf(beta24, x) >= 0.37
    assert time_avg_cdf(beta24, np.nextafter(x, 0.0)) < 0.37


def test_quantile_of_flat_region_takes_left_edge():
    # no mass on (0.4, 0.6): every level in [0.4, 0.6) has F = 1/2
    gap = WindProcessSpec.iid(PiecewiseLinear((0.0, 0.4, 0.6, 1.0), (0.0, 0.5, 0.5, 1.0)), 2)
    assert quantile(gap, 0.5) == pytest.approx(0.4, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.001, 0.999), st.floats(0.5, 5.0), st.floats(0.5, 5.0))
def test_quantile_galois_connection(x, a, b):
    spec = WindProcessSpec.iid(Beta(a, b), 4)
    fx = time_avg_cdf(spec, x)
    if fx > 0:
        # scipy's beta CDF can wiggle by an ulp, so allow the 1e-12
        # bisection tolerance here
        assert quantile(spec, fx) <= x + 1e-12
    g = min(max(fx, 1e-9), 1.0)
    assert time_avg_cdf(spec, quantile(spec, g)) >= g


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=40), st.floats(0.01, 1.0))
def test_empirical_quantile_is_inf_of_step_cdf(values, gamma):
    v = np.array(values)
    q = empirical_quantile(v, gamma)
    assert np.mean(v <= q) >= gamma
    below = v[v < q]
    if below.size:
        assert np.mean(v <= below.max()) < gamma


@pytest.mark.parametrize("n", [1, 3, 7, 10, 49, 100])
def test_order_stat_rank_exact_ratios(n):
    for j in range(1, n + 1):
        assert order_stat_rank(j / n, n) == j


def test_time_avg_cdf_monotone_on_grid(two_regime):
    xs = np.linspace(-0.05, 1.05, 200)
    f = [time_avg_cdf(two_regime, x) for x in xs]
    assert np.all(np.diff(f) >= 0)
    assert f[0] == 0.0 and f[-1] == 1.0


def test_sample_path_deterministic(two_regime):
    a = sample_path(two_regime, 5, 17)
    b = sample_path(two_regime, 5, 17)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_path(two_regime, 5, 18))


def test_sample_paths_rows_match_sample_path(two_regime):
    block = sample_paths(two_regime, 3, 50)
    for i in (0, 13, 49):
        assert np.array_equal(block[i], sample_path(two_regime, 3, i))


def test_sample_paths_independent_of_thread_count(monkeypatch, beta24):
    # bypass the cache by asking for a size nobody else uses
    monkeypatch.setenv(_parallel.ENV_THREADS, "1")
    one = np.array(sample_paths(beta24, 11, 4099))
    from storval.wind_process import _sample_block

    _sample_block.cache_clear()
    monkeypatch.setenv(_parallel.ENV_THREADS, "4")
    four = np.array(sample_paths(beta24, 11, 4099))
    assert np.array_equal(one, four)


def test_sample_paths_read_only(uniform24):
    block = sample_paths(uniform24, 0, 10)
    with pytest.raises(ValueError):
        block[0, 0] = 2.0


def test_uniform_sample_mean(uniform24):
    xi = sample_paths(uniform24, 1, 100_000)
    assert np.all(np.abs(xi.mean(axis=0) - 0.5) < 0.005)


@pytest.mark.parametrize(
    "marginal", [Uniform(0.2, 0.7), Beta(2.0, 5.0), TruncatedNormal(0.9, 0.3), PiecewiseLinear((0.0, 0.3, 1.0), (0.0, 0.8, 1.0))]
)
def test_samples_follow_marginal(marginal):
    spec = WindProcessSpec.iid(marginal, 8)
    xi = sample_paths(spec, 2, 5000).ravel()
    assert xi.min() >= 0.0 and xi.max() <= 1.0
    grid = np.linspace(0.05, 0.95, 19)
    emp = np.array([np.mean(xi <= g) for g in grid])
    # DKW band at 40000 draws: 1.36/sqrt(n) ~ 0.0068, doubled for safety
    assert np.max(np.abs(emp - marginal.cdf(grid))) < 0.014


def test_empirical_sampling_returns_rows():
    traces = np.array([[0.1, 0.2, 0.3], [0.9, 0.8, 0.7], [0.5, 0.5, 0.5]])
    spec = WindProcessSpec.empirical(traces)
    for i in range(20):
        row = sample_path(spec, 0, i)
        assert any(np.array_equal(row, t) for t in traces)


def test_empirical_cdf_converges():
    traces = sample_paths(WindProcessSpec.iid(Uniform(), 24), 9, 10_000)
    spec = WindProcessSpec.empirical(traces)
    grid = np.linspace(0.0, 1.0, 100)
    assert max(abs(time_avg_cdf(spec, g) - g) for g in grid) < 0.03


def test_spec_invariants():
    with pytest.raises(ValueError):
        WindProcessSpec(horizon=3, kind="nonstationary", marginals=(Uniform(),) * 2)
    with pytest.raises(ValueError):
        WindProcessSpec.empirical([[0.1, 0.2]])
    with pytest.raises(ValueError):
        WindProcessSpec.empirical([[0.1, 1.2], [0.3, 0.4]])
    with pytest.raises(ValueError):
        WindProcessSpec(horizon=0, kind="iid", marginals=(Uniform(),))
    with pytest.raises(ValueError):
        Uniform(0.5, 0.2)


def test_spec_key_tracks_content():
    a = WindProcessSpec.iid(Beta(2, 5), 24)
    assert a.key == WindProcessSpec.iid(Beta(2, 5), 24).key
    assert a.key != WindProcessSpec.iid(Beta(2, 5), 23).key
    assert TWO_ROW.key != WindProcessSpec.empirical([[0.2, 0.8], [0.6, 0.5]]).key


def test_marginal_round_trip():
    for m in (Uniform(0.1, 0.9), Beta(2, 5), TruncatedNormal(0.5, 0.2), PiecewiseLinear((0.0, 1.0), (0.0, 1.0))):
        assert marginal_from_dict(m.to_dict()) == m
    with pytest.raises(ValueError):
        marginal_from_dict({"family": "weibull"})


def test_trace_csv_round_trip(tmp_path):
    traces = sample_paths(WindProcessSpec.iid(Beta(2, 5), 6), 0, 5)
    path = tmp_path / "t.csv"
    write_trace_csv(path, traces)
    assert np.array_equal(read_trace_csv(path), traces)
    assert path.read_bytes().count(b"\r") == 0


@pytest.mark.parametrize(
    "text, line",
    [
        ("t0,t1\n0.1,0.2\n0.3\n", "line 3"),
        ("t0,t1\n0.1,0.2\n0.3,abc\n", "line 3"),
        ("t0,t1\n0.1,1.5\n0.3,0.4\n", "line 2"),
        ("x0,x1\n0.1,0.2\n0.3,0.4\n", "line 1"),
    ],
)
def test_trace_csv_errors_name_line(text, line):
    with pytest.raises(TraceFormatError, match=line):
        parse_trace_csv(text)


def test_trace_csv_needs_two_rows():
    with pytest.raises(TraceFormatError):
        parse_trace_csv("t0,t1\n0.1,0.2\n")
    with pytest.raises(TraceFormatError):
        parse_trace_csv("")
