import numpy as np
import pandas as pd
import pytest

from helpers import TinyInputs
from narralpha.ingest import load_dataset
from narralpha.oracles import drift_turnover
from narralpha.portfolio import (
    SignalSnapshot,
    StrategySeries,
    build_signal,
    combine_strategies,
    conditional_double_sort,
    form_deciles,
    information_ratio,
    leg_turnover,
    net_returns,
    perf_stats,
    sharpe_ratio,
    strategy_returns,
    turnover_summary,
)


def _forecast_frame(rows):
    df = pd.DataFrame(rows, columns=["report_id", "firm_id", "release_date", "predicted_return"])
    df["release_date"] = pd.to_datetime(df["release_date"])
    return df


def _snapshot(signals: dict, caps: dict, month="2020-06") -> SignalSnapshot:
    table = pd.DataFrame(
        {"signal": pd.Series(signals), "n_reports": 1, "lagged_cap": pd.Series(caps)}
    ).sort_index()
    return SignalSnapshot(month=pd.Period(month, freq="M"), table=table)


# -- build_signal ------------------------------------------------------------

def test_signal_is_mean_of_window_forecasts(mini_dataset):
    fr = _forecast_frame([
        ("R1", "F0001", "2000-03-10", 0.10),
        ("R2", "F0001", "2000-04-20", 0.20),
        ("R3", "F0002", "2000-01-05", 0.50),   # outside the window
    ])
    snap = build_signal(fr, mini_dataset.market, pd.Period("2000-05", freq="M"), lb=3)
    assert snap.table.loc["F0001", "signal"] == pytest.approx(0.15)
    assert "F0002" not in snap.table.index


def test_firm_without_window_reports_absent(mini_dataset):
    fr = _forecast_frame([("R1", "F0001", "2000-03-10", 0.10)])
    snap = build_signal(fr, mini_dataset.market, pd.Period("2001-05", freq="M"), lb=3)
    assert snap.table.empty


def test_signal_matches_groupby_oracle(mini_dataset, mini_run):
    month = pd.Period("2002-06", freq="M")
    lb = 12
    snap = build_signal(mini_run.forecasts, mini_dataset.market, month, lb)
    fr = mini_run.forecasts
    fr = fr[
        (fr["release_date"].dt.to_period("M") >= month - lb)
        & (fr["release_date"].dt.to_period("M") <= month - 1)
    ]
    # brute-force per-firm grouping
    expected = {}
    for rec in fr.itertuples(index=False):
        expected.setdefault(rec.firm_id, []).append(rec.predicted_return)
    for firm, vals in expected.items():
        if firm in snap.table.index:
            assert snap.table.loc[firm, "signal"] == pytest.approx(np.mean(vals), abs=1e-14)


# -- form_deciles ----------------------------------------------------------------

def test_twenty_firms_two_per_decile():
    signals = {f"F{i:02d}": float(i) for i in range(20)}
    caps = {f"F{i:02d}": 50.0 for i in range(20)}
    out = form_deciles(_snapshot(signals, caps))
    assert (out.groupby("decile").size() == 2).all()
    assert out.loc["F00", "decile"] == 1 and out.loc["F19", "decile"] == 10


def test_equal_caps_give_equal_weights():
    signals = {f"F{i:02d}": float(i) for i in range(20)}
    caps = {f"F{i:02d}": 7.0 for i in range(20)}
    out = form_deciles(_snapshot(signals, caps))
    assert np.allclose(out["weight"], 0.5)


def test_thousand_firms_match_sort_oracle():
    rng = np.random.default_rng(0)
    ids = [f"F{i:04d}" for i in range(1000)]
    sig = rng.standard_normal(1000)
    caps = rng.uniform(1, 100, 1000)
    out = form_deciles(_snapshot(dict(zip(ids, sig)), dict(zip(ids, caps))))
    counts = out.groupby("decile").size()
    assert counts.max() - counts.min() <= 1
    # independent full-sort oracle
    order = sorted(range(1000), key=lambda i: (sig[i], ids[i]))
    for rank, i in enumerate(order, start=1):
        expected = int(np.ceil(rank * 10 / 1000))
        assert out.loc[ids[i], "decile"] == expected
    sums = out.groupby("decile")["weight"].sum()
    assert np.allclose(sums, 1.0, atol=1e-9)


def test_too_few_firms_errors():
    signals = {f"F{i}": float(i) for i in range(9)}
    caps = {f"F{i}": 1.0 for i in range(9)}
    with pytest.raises(ValueError, match="at least"):
        form_deciles(_snapshot(signals, caps))


def test_positive_scaling_leaves_deciles_bit_identical():
    rng = np.random.default_rng(1)
    ids = [f"F{i:03d}" for i in range(137)]
    sig = rng.standard_normal(137)
    sig[10:20] = sig[0]  # planted ties
    caps = rng.uniform(1, 10, 137)
    a = form_deciles(_snapshot(dict(zip(ids, sig)), dict(zip(ids, caps))))
    b = form_deciles(_snapshot(dict(zip(ids, 3.7 * sig)), dict(zip(ids, caps))))
    pd.testing.assert_series_equal(a["decile"], b["decile"])
    pd.testing.assert_series_equal(a["weight"], b["weight"])


# -- strategy_returns ---------------------------------------------------------------

def _ten_firm_dataset(tmp_path):
    t = TinyInputs(tmp_path, n_months=4, days_per_month=5)
    rng = np.random.default_rng(2)
    for i in range(10):
        rets = rng.normal(0.001 * i, 0.001, len(t.days))
        t.add_firm(f"F{i}", daily_ret=list(rets), cap=10.0 * (i + 1))
    rid = 0
    for mi in range(4):
        for i in range(10):
            t.add_report(f"R{rid:03d}", f"F{i}", t.days[mi * 5 + 1])
            rid += 1
    return load_dataset(t.write())


def test_single_firm_deciles_and_hl_identity(tmp_path):
    ds = _ten_firm_dataset(tmp_path)
    fr = _forecast_frame([
        (f"R{i:03d}", f"F{i}", ds.reports.loc[f"R{i:03d}", "release_date"], float(i))
        for i in range(10)
    ])
    series = strategy_returns(ds, fr, lb=2)
    monthly = ds.market.monthly_returns()
    for m in series["hl"].returns.index:
        # each decile holds exactly one firm: decile return equals firm return
        assert series["d10"].returns[m] == pytest.approx(monthly.loc[m, "F9"], abs=1e-14)
        assert series["d1"].returns[m] == pytest.approx(monthly.loc[m, "F0"], abs=1e-14)
        assert series["hl"].returns[m] == series["d10"].returns[m] - series["d1"].returns[m]
        assert abs(sum(series["hl"].weights[m])) < 1e-9


def test_evaluation_window_matches_manual_filter(mini_dataset, mini_run):
    full = strategy_returns(mini_dataset, mini_run.forecasts, lb=12)
    cut = pd.Period("2002-06", freq="M")
    windowed = strategy_returns(mini_dataset, mini_run.forecasts, lb=12, start=cut)
    manual = full["hl"].returns[full["hl"].returns.index >= cut]
    pd.testing.assert_series_equal(windowed["hl"].returns, manual)
    assert windowed["hl"].returns.index.min() >= cut


def test_backtest_stats_combo_and_alpha_table(mini_dataset, mini_run):
    from narralpha.pipeline import backtest_stats

    stats = backtest_stats(
        mini_dataset, mini_run.forecasts, 12, "ff6", [35.0], combos=["mktrf"]
    )
    series = stats.pop("_series")
    months = pd.PeriodIndex(sorted(series["hl"].index), freq="M")
    combo = stats["combo"]
    expected = (series["hl"] + mini_dataset.factors.loc[months, "mktrf"]) / 2.0
    assert combo["mean"] == pytest.approx(float(expected.mean()) * 100.0, abs=1e-10)
    assert set(combo["ir_vs_component"]) == {"hl", "mktrf"}
    assert set(stats["hl_alphas"]) == {"capm", "ff3", "ff5", "ff6"}
    for block in stats["hl_alphas"].values():
        assert np.isfinite(block["alpha"]) and np.isfinite(block["t"])


def test_backtest_recovers_measured_spread(mini_dataset, mini_run, mini_dir):
    import json

    series = strategy_returns(mini_dataset, mini_run.forecasts, lb=12)
    hl_ann = float(series["hl"].returns.mean()) * 12.0
    measured = json.loads((mini_dir / "manifest.json").read_text())["measured_spread_annualized"]["g3"]
    assert hl_ann == pytest.approx(measured, rel=0.20)


# -- perf_stats -------------------------------------------------------------------------

def test_reported_sharpe_arithmetic_example():
    assert sharpe_ratio(1.04, 5.21) == pytest.approx(0.69, abs=0.01)


def test_series_equal_to_factor_has_unit_loading(mini_dataset):
    factors = mini_dataset.factors
    series = factors["mktrf"] + factors["rf"]  # a long leg earning rf + factor
    stats = perf_stats(series, factors, model="capm", leg="long")
    assert stats.alpha == pytest.approx(0.0, abs=1e-10)
    from narralpha.econometrics import add_intercept, ols

    res = ols(add_intercept(factors[["mktrf"]].to_numpy()),
              (series - factors["rf"]).to_numpy(), names=["a", "mkt"])
    assert res.params[1] == pytest.approx(1.0, abs=1e-12)
    assert res.adj_r2 == pytest.approx(1.0, abs=1e-12)


def test_sharpe_consistency_invariant(mini_dataset, mini_run):
    series = strategy_returns(mini_dataset, mini_run.forecasts, lb=12)
    stats = perf_stats(series["hl"].returns, mini_dataset.factors, model="ff6", leg="ls")
    assert stats.sharpe == pytest.approx(stats.mean / stats.sd * np.sqrt(12.0), abs=1e-6)


def test_short_series_rejected(mini_dataset):
    short = pd.Series(0.01, index=pd.period_range("2000-01", periods=12, freq="M"))
    with pytest.raises(ValueError, match="24"):
        perf_stats(short, mini_dataset.factors)


# -- turnover and net returns ----------------------------------------------------------

def _series_from_weights(weights_by_month):
    months = pd.PeriodIndex(sorted(weights_by_month), freq="M")
    return StrategySeries(
        label="x",
        returns=pd.Series(0.0, index=months),
        weights={m: pd.Series(w) for m, w in weights_by_month.items()},
    )


def _months(*specs):
    return {pd.Period(m, freq="M"): w for m, w in specs}


def test_buy_and_hold_turnover_zero():
    months = _months(("2020-01", {"A": 1.0}), ("2020-02", {"A": 1.0}), ("2020-03", {"A": 1.0}))
    series = _series_from_weights(months)
    rets = pd.DataFrame(
        {"A": [0.02, -0.01, 0.03]}, index=pd.period_range("2020-01", periods=3, freq="M")
    )
    rf = pd.Series(0.001, index=rets.index)
    to = leg_turnover(series, rets, rf)
    assert np.abs(to).max() == pytest.approx(0.0, abs=1e-15)


def test_full_switch_turnover_two():
    months = _months(("2020-01", {"A": 1.0}), ("2020-02", {"B": 1.0}), ("2020-03", {"A": 1.0}))
    series = _series_from_weights(months)
    rets = pd.DataFrame(
        {"A": [0.0, 0.0, 0.0], "B": [0.0, 0.0, 0.0]},
        index=pd.period_range("2020-01", periods=3, freq="M"),
    )
    rf = pd.Series(0.0, index=rets.index)
    to = leg_turnover(series, rets, rf)
    assert list(to) == [pytest.approx(2.0), pytest.approx(2.0)]


def test_random_paths_match_drift_oracle():
    rng = np.random.default_rng(3)
    months = pd.period_range("2019-01", periods=8, freq="M")
    assets = list("ABCDE")
    weights = {}
    for m in months:
        raw = rng.uniform(0.1, 1.0, 5)
        weights[m] = dict(zip(assets, raw / raw.sum()))
    rets = pd.DataFrame(rng.normal(0.01, 0.05, (8, 5)), index=months, columns=assets)
    rf_vals = rng.uniform(0.0, 0.002, 8)
    rf = pd.Series(rf_vals, index=months)
    series = _series_from_weights({m: w for m, w in weights.items()})
    got = leg_turnover(series, rets, rf)
    expected = drift_turnover(
        [weights[m] for m in months],
        [rets.loc[m].to_dict() for m in months[1:]],
        [rf[m] for m in months[1:]],
    )
    np.testing.assert_allclose(got.to_numpy(), expected, atol=1e-12)


def test_net_return_hand_example():
    months = pd.PeriodIndex(["2020-02"], freq="M")
    series = StrategySeries("x", pd.Series([0.01], index=months))
    to = pd.Series([0.5], index=months)
    rf = pd.Series([0.0], index=months)
    net = net_returns(series, to, 0.0035, rf)
    assert net.returns.iloc[0] == pytest.approx(0.0082325, abs=1e-10)


def test_zero_cost_and_zero_turnover_leave_gross(mini_dataset, mini_run):
    series = strategy_returns(mini_dataset, mini_run.forecasts, lb=12)
    monthly = mini_dataset.market.monthly_returns()
    rf = mini_dataset.factors["rf"]
    to = turnover_summary(series["d10"], series["d1"], monthly, rf)
    base = (to["series"]["long"] + to["series"]["short"]).dropna()
    net0 = net_returns(series["hl"], base, 0.0, rf)
    pd.testing.assert_series_equal(net0.returns, series["hl"].returns)
    netz = net_returns(series["hl"], base * 0.0, 0.0035, rf)
    pd.testing.assert_series_equal(netz.returns, series["hl"].returns)


def test_ls_turnover_mean_of_legs_convention(mini_dataset, mini_run):
    series = strategy_returns(mini_dataset, mini_run.forecasts, lb=12)
    monthly = mini_dataset.market.monthly_returns()
    rf = mini_dataset.factors["rf"]
    to = turnover_summary(series["d10"], series["d1"], monthly, rf)
    assert to["ls_mean_of_legs"] == pytest.approx((to["ls_sum_of_legs"]) / 2.0, abs=1e-12)


# -- combinations and information ratio -----------------------------------------------

def _const_series(vals, start="2019-01"):
    months = pd.period_range(start, periods=len(vals), freq="M")
    return StrategySeries("s", pd.Series(vals, index=months, dtype=float))


def test_combine_identical_series_unchanged():
    s = _const_series(np.random.default_rng(4).normal(0, 0.01, 30))
    combo = combine_strategies([s, s])
    pd.testing.assert_series_equal(combo.returns, s.returns, check_names=False)


def test_combine_opposite_series_zero():
    r = np.random.default_rng(5).normal(0, 0.01, 30)
    combo = combine_strategies([_const_series(r), _const_series(-r)])
    assert np.abs(combo.returns).max() < 1e-18


def test_combine_matches_mean_oracle():
    rng = np.random.default_rng(6)
    comps = [_const_series(rng.normal(0, 0.01, 30)) for _ in range(3)]
    combo = combine_strategies(comps)
    expected = np.mean([c.returns.to_numpy() for c in comps], axis=0)
    np.testing.assert_allclose(combo.returns.to_numpy(), expected, atol=1e-15)


def test_combine_rejects_misaligned_months():
    a = _const_series([0.01] * 30)
    b = _const_series([0.01] * 30, start="2019-02")
    with pytest.raises(ValueError, match="misaligned"):
        combine_strategies([a, b])


def test_information_ratio_degenerate_difference_errors():
    s = _const_series(np.random.default_rng(7).normal(0, 0.01, 40))
    with pytest.raises(ValueError, match="zero-variance"):
        information_ratio(s, s)


def test_information_ratio_monte_carlo_band():
    rng = np.random.default_rng(8)
    n = 240
    base = rng.normal(0.005, 0.02, n)
    combined = _const_series(base + 0.001 + rng.normal(0.0, 0.005, n))
    benchmark = _const_series(base)
    ir, t = information_ratio(combined, benchmark)
    target = 0.001 / 0.005 * np.sqrt(12.0)
    se = np.sqrt(12.0 / n)  # sampling error of the annualized mean/sd ratio
    assert abs(ir - target) < 3 * se
    assert t > 2


def test_information_ratio_sign_matches_mean_difference():
    rng = np.random.default_rng(9)
    noise = rng.normal(0, 0.01, 60)
    a = _const_series(noise + 0.002)
    b = _const_series(-noise)
    ir, _ = information_ratio(a, b)
    assert np.sign(ir) == np.sign((a.returns - b.returns).mean())


# -- conditional double sort ---------------------------------------------------------

def test_double_sort_null_characteristic(mini_dataset, mini_run):
    # bm is generated independently of the planted signal and of returns
    res = conditional_double_sort(mini_dataset, "bm", mini_run.forecasts, horizon=63, bins=2)
    assert set(res.curves) == {"above_high", "above_low", "below_high", "below_low"}
    assert abs(res.spread_diff_t) < 3.0


def test_double_sort_characteristic_equal_to_signal_degenerates(mini_dataset):
    # forecasts constant per firm and equal to the characteristic: the top
    # forecast decile sits entirely in the Above group
    reports = mini_dataset.reports
    chars = mini_dataset.market.chars
    firm_sig = {f: float(i) for i, f in enumerate(sorted(reports["firm_id"].unique()))}
    fr = _forecast_frame(
        [
            (r.report_id, r.firm_id, r.release_date, firm_sig[r.firm_id])
            for r in reports.itertuples(index=False)
        ]
    )
    original = chars
    patched = chars.copy()
    patched["bm"] = [firm_sig.get(f, 0.0) for _, f in patched.index]
    mini_dataset.market.chars = patched
    try:
        res = conditional_double_sort(mini_dataset, "bm", fr, horizon=21, bins=2)
        assert "below_high" not in res.curves or res.curves["below_high"].n_events == 0
        assert "above_high" in res.curves and res.curves["above_high"].n_events > 0
        assert np.isnan(res.spread_diff)
    finally:
        mini_dataset.market.chars = original


def test_double_sort_planted_interaction(tmp_path):
    from narralpha.forecast import expanding_forecasts
    from narralpha.synth import SynthSpec, generate

    out = tmp_path / "inter"
    generate(
        SynthSpec(
            n_firms=80, n_months=42, dim=16, seed=11,
            signal_spreads={"g3": 0.10}, interaction_char="gprof", noise_daily=0.0015,
        ),
        out,
    )
    ds = load_dataset(out / "inputs.json")
    run = expanding_forecasts(ds, burn_in_months=14)
    res = conditional_double_sort(ds, "gprof", run.forecasts, horizon=63, bins=2)
    assert res.spread_diff > 0
    assert res.spread_diff_t > 2.0
