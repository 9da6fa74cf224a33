import datetime as dt

import numpy as np
import pytest

from conftest import planted_pair, weekday_calendar
from newsflow.errors import (
    ConfigError,
    DataError,
    DegenerateSeriesError,
    InsufficientDataError,
)
from newsflow.infotheory import (
    SymbolicEncoderConfig,
    SymbolSeries,
    TEConfig,
    adf_unit_root,
    bootstrap_pvalue,
    by_fdr,
    difference,
    effective_te,
    run_te_study,
    symbolic_encode,
    te_from_triples,
    transfer_entropy,
)


# --- ADF pre-test -------------------------------------------------------------


def test_adf_rejects_stationary_ar1():
    rejections = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        x = np.empty(500)
        x[0] = rng.standard_normal()
        for i in range(1, 500):
            x[i] = 0.5 * x[i - 1] + rng.standard_normal()
        rejections += adf_unit_root(x).reject_at_1pct
    assert rejections >= 99


def test_adf_keeps_random_walk():
    rejections = 0
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        walk = np.cumsum(rng.standard_normal(500))
        rejections += adf_unit_root(walk).reject_at_1pct
    assert rejections <= 5


def test_adf_linear_ramp_no_crash():
    result = adf_unit_root(np.arange(500.0) * 0.3)
    assert not result.reject_at_1pct


def test_adf_degenerate_and_short_input():
    with pytest.raises(DegenerateSeriesError):
        adf_unit_root(np.ones(100))
    with pytest.raises(InsufficientDataError):
        adf_unit_root(np.arange(10.0))


# --- differencing ---------------------------------------------------------------


def test_difference_trivial():
    np.testing.assert_array_equal(difference([1, 1, 1]), [0, 0])
    np.testing.assert_array_equal(difference([0, 1, 3, 6]), [1, 2, 3])


def test_difference_inverse_op_oracle():
    rng = np.random.default_rng(3)
    # integer-valued series keep the cumulative-sum reconstruction exact
    x = rng.integers(-1000, 1000, size=257).astype(float)
    rebuilt = np.concatenate([[x[0]], x[0] + np.cumsum(difference(x))])
    np.testing.assert_array_equal(rebuilt, x)
    y = rng.standard_normal(257)
    rebuilt_y = np.concatenate([[y[0]], y[0] + np.cumsum(difference(y))])
    np.testing.assert_allclose(rebuilt_y, y, atol=1e-12)


def test_difference_too_short():
    with pytest.raises(InsufficientDataError):
        difference([1.0])


# --- symbolic encoding ------------------------------------------------------------


def test_encode_standard_normal_occupancy():
    rng = np.random.default_rng(5)
    series = symbolic_encode(rng.standard_normal(10_000))
    occupancy = np.bincount(series.symbols, minlength=6) / 10_000
    np.testing.assert_allclose(occupancy, [0.05, 0.20, 0.25, 0.25, 0.20, 0.05], atol=0.01)


def test_encode_boundary_tie_goes_to_upper_bin():
    series = SymbolSeries(
        symbols=np.array([]), boundaries=np.array([0.0, 1.0]), source_len=0, n_bins=3
    )
    # the rule, stated bit-exactly: searchsorted right of the boundaries
    values = np.array([-0.5, 0.0, 0.5, 1.0, 1.5])
    symbols = np.searchsorted(series.boundaries, values, side="right")
    np.testing.assert_array_equal(symbols, [0, 1, 1, 2, 2])


def test_encode_constant_plus_noise_no_crash():
    rng = np.random.default_rng(6)
    x = 3.0 + 1e-9 * rng.standard_normal(100)
    series = symbolic_encode(x)
    assert series.symbols.max() < series.n_bins


def test_encode_monotone_transform_invariance():
    rng = np.random.default_rng(7)
    x = rng.standard_normal(500)
    a = symbolic_encode(x)
    b = symbolic_encode(np.exp(2.0 * x) + 5.0)  # strictly increasing transform
    np.testing.assert_array_equal(a.symbols, b.symbols)


def test_encode_errors():
    with pytest.raises(InsufficientDataError):
        symbolic_encode(np.arange(5.0))
    with pytest.raises(DegenerateSeriesError):
        symbolic_encode(np.ones(50))
    with pytest.raises(ConfigError):
        SymbolicEncoderConfig(quantiles=(0.5, 0.25))


# --- transfer entropy --------------------------------------------------------------


def xor_pair(rng, n, eps=0.1):
    s = rng.integers(0, 2, n)
    flip = rng.random(n) < eps
    r = np.empty(n, dtype=np.int64)
    r[0] = rng.integers(0, 2)
    r[1:] = s[:-1] ^ flip[:-1]
    return SymbolSeries.from_symbols(s, 2), SymbolSeries.from_symbols(r, 2)


def copy_pair(rng, n, n_symbols=4):
    s = rng.integers(0, n_symbols, n)
    r = np.empty(n, dtype=np.int64)
    r[0] = 0
    r[1:] = s[:-1]
    return SymbolSeries.from_symbols(s, n_symbols), SymbolSeries.from_symbols(r, n_symbols)


def test_te_independent_pair_is_small():
    rng = np.random.default_rng(11)
    s = SymbolSeries.from_symbols(rng.integers(0, 6, 5000), 6)
    r = SymbolSeries.from_symbols(rng.integers(0, 6, 5000), 6)
    cfg = TEConfig(seed=1)
    assert transfer_entropy(s, r, cfg) < 0.05
    assert abs(effective_te(s, r, cfg)) < 0.02


def test_te_insufficient_length_reports_minimum():
    s = SymbolSeries.from_symbols(np.zeros(50, dtype=int), 2)
    with pytest.raises(InsufficientDataError) as err:
        transfer_entropy(s, s, TEConfig())
    assert err.value.required == 100


def test_te_mismatched_lengths():
    a = SymbolSeries.from_symbols(np.zeros(200, dtype=int), 2)
    b = SymbolSeries.from_symbols(np.zeros(201, dtype=int), 2)
    with pytest.raises(DataError):
        transfer_entropy(a, b, TEConfig())


def entropy_difference_oracle(r_next, r_prev, s_prev, bins):
    """TE as H(r_{t+1}|r_t) - H(r_{t+1}|r_t,s_t) from raw joint counts."""

    def conditional_entropy(xs, ys):
        joint = {}
        for pair in zip(xs, ys):
            joint[pair] = joint.get(pair, 0) + 1
        marginal = {}
        for (_, y), c in joint.items():
            marginal[y] = marginal.get(y, 0) + c
        n = len(xs)
        return -sum(c / n * np.log2(c / marginal[y]) for (x, y), c in joint.items())

    pairs = list(zip(r_prev, s_prev))
    return conditional_entropy(r_next, r_prev) - conditional_entropy(r_next, pairs)


def test_te_equals_entropy_difference_form():
    # identity between the KL-sum estimator and the conditional-entropy form
    rng = np.random.default_rng(13)
    for _ in range(100):
        bins = int(rng.integers(2, 6))
        n = int(rng.integers(120, 400))
        r_next = rng.integers(0, bins, n)
        r_prev = rng.integers(0, bins, n)
        s_prev = rng.integers(0, bins, n)
        got = te_from_triples(r_next, r_prev, s_prev, bins)
        expected = entropy_difference_oracle(r_next, r_prev, s_prev, bins)
        assert got == pytest.approx(expected, abs=1e-10)


def test_te_nonnegative_and_conditioning_reduces_entropy():
    rng = np.random.default_rng(14)
    for _ in range(50):
        bins = int(rng.integers(2, 5))
        n = 300
        r_next = rng.integers(0, bins, n)
        r_prev = rng.integers(0, bins, n)
        s_prev = rng.integers(0, bins, n)
        te = te_from_triples(r_next, r_prev, s_prev, bins)
        assert te >= 0.0
        # H(X|Y) <= H(X) on the empirical distribution
        counts = np.bincount(r_next, minlength=bins)
        p = counts[counts > 0] / n
        h_marginal = -np.sum(p * np.log2(p))
        joint = {}
        for pair in zip(r_next, r_prev):
            joint[pair] = joint.get(pair, 0) + 1
        marg = np.bincount(r_prev, minlength=bins)
        h_conditional = -sum(
            c / n * np.log2(c / marg[y]) for (x, y), c in joint.items()
        )
        assert h_conditional <= h_marginal + 1e-12


def test_te_monotone_transform_invariance_end_to_end():
    rng = np.random.default_rng(15)
    x = rng.standard_normal(2000)
    y = rng.standard_normal(2000)
    cfg = TEConfig(seed=2)
    te_raw = transfer_entropy(symbolic_encode(x), symbolic_encode(y), cfg)
    te_tx = transfer_entropy(
        symbolic_encode(np.tanh(x) * 7 + 2), symbolic_encode(y**3 + y), cfg
    )
    assert te_raw == te_tx  # exact: identical symbol streams


# --- effective TE -------------------------------------------------------------------


def test_ete_deterministic_copy_close_to_te():
    rng = np.random.default_rng(16)
    s, r = copy_pair(rng, 5000)
    cfg = TEConfig(seed=3)
    te = transfer_entropy(s, r, cfg)
    ete = effective_te(s, r, cfg)
    assert te == pytest.approx(2.0, abs=0.02)
    assert te - ete == pytest.approx(0.0, abs=0.01)  # shuffle term is only bias


def test_ete_fixed_seed_bit_identical():
    rng = np.random.default_rng(17)
    s, r = xor_pair(rng, 3000)
    cfg = TEConfig(seed=99)
    assert effective_te(s, r, cfg) == effective_te(s, r, cfg)


# --- bootstrap p-values ----------------------------------------------------------------


def test_bootstrap_deterministic_copy_minimum_p():
    rng = np.random.default_rng(18)
    s, r = copy_pair(rng, 5000)
    p = bootstrap_pvalue(s, r, TEConfig(seed=4))
    assert p == pytest.approx(1 / 301, abs=1e-12)


def test_bootstrap_guard():
    rng = np.random.default_rng(19)
    s, r = copy_pair(rng, 500)
    with pytest.raises(ConfigError):
        bootstrap_pvalue(s, r, TEConfig(seed=1, n_bootstrap=0))


def test_teconfig_enforces_single_step_history():
    with pytest.raises(ConfigError):
        TEConfig(history_target=2)
    with pytest.raises(ConfigError):
        TEConfig(sentiment_lag=-1)


# --- Benjamini-Yekutieli -----------------------------------------------------------------


def test_by_fdr_worked_example():
    # c(4) = 25/12; thresholds 0.006, 0.012, 0.018, 0.024
    rejected = by_fdr({"a": 0.001, "b": 0.02, "c": 0.03, "d": 0.2}, q=0.05)
    assert rejected == ["a"]


def test_by_fdr_extremes():
    assert by_fdr({"a": 1.0, "b": 1.0}, q=0.1) == []
    assert by_fdr({"a": 0.0, "b": 0.0, "c": 0.0}, q=0.1) == ["a", "b", "c"]


def test_by_fdr_validation():
    with pytest.raises(ConfigError):
        by_fdr({}, q=0.05)
    with pytest.raises(ConfigError):
        by_fdr({"a": 0.5}, q=1.5)
    with pytest.raises(DataError):
        by_fdr({"a": -0.1}, q=0.05)


def test_by_fdr_monotone_in_q():
    rng = np.random.default_rng(20)
    pvalues = {f"t{i}": float(p) for i, p in enumerate(rng.random(30) ** 2)}
    previous: set = set()
    for q in (0.01, 0.05, 0.1, 0.2, 0.5):
        current = set(by_fdr(pvalues, q))
        assert previous <= current
        previous = current


# --- study-level behaviour ----------------------------------------------------------------


def test_run_te_study_empty_inputs():
    result = run_te_study({}, {}, TEConfig(seed=1), q=0.05)
    assert result.results == [] and result.rejected == []


def test_run_te_study_lag_sensitivity():
    calendar = weekday_calendar(dt.date(2021, 1, 4), 40)
    rng = np.random.default_rng(23)
    sent, ret = planted_pair("LAGD", calendar, 30, rng, couple_lag=2, noise=0.25)
    sentiment = {"LAGD": sent}
    returns = {"LAGD": ret}

    lag0 = run_te_study(sentiment, returns, TEConfig(sentiment_lag=0, seed=5), q=0.05)
    lag2 = run_te_study(sentiment, returns, TEConfig(sentiment_lag=2, seed=5), q=0.05)
    p0 = lag0.results[0].p_value
    p2 = lag2.results[0].p_value
    assert p2 == pytest.approx(1 / 301, abs=1e-12)  # delayed coupling found at lag 2
    assert p0 > 0.05  # invisible at lag 0
    assert lag2.results[0].n_obs >= 100
    assert not lag2.results[0].differenced  # i.i.d. sentiment is stationary


def test_run_te_study_excludes_short_tickers():
    calendar = weekday_calendar(dt.date(2021, 1, 4), 40)
    rng = np.random.default_rng(24)
    sent_ok, ret_ok = planted_pair("GOOD", calendar, 30, rng)
    sent_short, ret_short = planted_pair("TINY", calendar, 3, rng)
    result = run_te_study(
        {"GOOD": sent_ok, "TINY": sent_short},
        {"GOOD": ret_ok, "TINY": ret_short},
        TEConfig(seed=6),
        q=0.05,
    )
    assert [r.ticker for r in result.results] == ["GOOD"]
    assert "TINY" in result.skipped


def test_run_te_study_deterministic_across_threads():
    calendar = weekday_calendar(dt.date(2021, 1, 4), 40)
    rng = np.random.default_rng(25)
    universe = {}
    returns = {}
    for i in range(6):
        s, r = planted_pair(f"T{i}", calendar, 25, np.random.default_rng(100 + i),
                            couple_lag=0 if i < 2 else None)
        universe[f"T{i}"] = s
        returns[f"T{i}"] = r
    cfg = TEConfig(seed=7, n_shuffles=20, n_bootstrap=40)
    serial = run_te_study(universe, returns, cfg, q=0.05, threads=1)
    parallel = run_te_study(universe, returns, cfg, q=0.05, threads=8)
    assert serial.results == parallel.results
    assert serial.rejected == parallel.rejected
