import numpy as np
import pandas as pd
import pytest

from helpers import TinyInputs
from narralpha.eventstudy import (
    EventContext,
    assign_benchmarks,
    car,
    event_decile_curves,
    nw_tstat_of_mean,
    prepare_events,
)
from narralpha.ingest import load_dataset
from narralpha.oracles import groupby_benchmark


def _forecast_frame(rows):
    df = pd.DataFrame(rows, columns=["report_id", "firm_id", "release_date", "predicted_return"])
    df["release_date"] = pd.to_datetime(df["release_date"])
    return df


def _uniform_universe(tmp_path, n_firms=6, n_months=4, ret=0.01, identical=True):
    """Firms with identical characteristics (one cell) and optional equal paths."""
    t = TinyInputs(tmp_path, n_months=n_months, days_per_month=5)
    rng = np.random.default_rng(0)
    for i in range(n_firms):
        r = ret if identical else float(rng.normal(0.001, 0.002))
        t.add_firm(f"F{i}", daily_ret=r, cap=100.0)
    for i in range(n_firms):
        t.add_report(f"R{i}", f"F{i}", t.days[6])
    return load_dataset(t.write())


def test_single_cell_benchmark_is_market(tmp_path):
    ds = _uniform_universe(tmp_path, identical=False)
    panel = assign_benchmarks(ds, bins=2)
    # identical characteristics force everyone into the same cell
    month = pd.Period("2020-02", freq="M")
    cells = panel.cells.loc[month]
    assert cells["cell"].nunique() == 1
    day = ds.calendar.day(7)
    rets = ds.market.returns.loc[day]
    caps = cells["weight"]
    expected = float((caps * rets[caps.index]).sum() / caps.sum())
    got = panel.bench_returns.loc[day].iloc[0]
    assert got == pytest.approx(expected, abs=1e-12)


def test_lone_firm_has_zero_abnormal_return(tmp_path):
    t = TinyInputs(tmp_path, n_months=3, days_per_month=5)
    t.add_firm("F1", daily_ret=0.013, cap=50.0)
    t.add_report("R1", "F1", t.days[6])
    ds = load_dataset(t.write())
    got = car(ds, "F1", ds.calendar.day(6), horizon=5)
    assert got == pytest.approx(0.0, abs=1e-12)


def test_benchmark_matches_groupby_oracle(mini_dataset):
    panel = assign_benchmarks(mini_dataset, bins=3)
    month = pd.Period("2001-05", freq="M")
    cells = panel.cells.loc[month]
    day = pd.Timestamp("2001-05-07")
    rets = mini_dataset.market.returns.loc[day]
    expected = groupby_benchmark(
        cells["cell"].to_dict(), cells["weight"].to_dict(), rets.to_dict()
    )
    for firm, cell in cells["cell"].items():
        got = panel.bench_returns.loc[day, firm]
        assert got == pytest.approx(expected[cell], abs=1e-12)


def test_value_weight_neutrality(mini_dataset):
    panel = assign_benchmarks(mini_dataset, bins=3)
    returns = mini_dataset.market.returns
    for month in [pd.Period("2001-03", freq="M"), pd.Period("2002-08", freq="M")]:
        cells = panel.cells.loc[month]
        days = returns.index[returns.index.to_period("M") == month]
        for cell_id, members in cells.groupby("cell").groups.items():
            caps = cells.loc[members, "weight"]
            sub = returns.loc[days, members]
            bench = panel.bench_returns.loc[days, members[0]]
            abnormal = sub.sub(bench, axis=0)
            weighted = (abnormal * caps).sum(axis=1) / caps.sum()
            assert np.abs(weighted.fillna(0.0)).max() < 1e-10


def test_car_equal_paths_zero(tmp_path):
    ds = _uniform_universe(tmp_path, identical=True)
    assert car(ds, "F0", ds.calendar.day(6), horizon=8) == pytest.approx(0.0, abs=1e-12)


def test_car_one_percent_daily_vs_flat_benchmark(tmp_path):
    # two firms in one cell: target compounds 1%/day, the cap-heavy peer is flat
    t = TinyInputs(tmp_path, n_months=3, days_per_month=5)
    t.add_firm("F1", daily_ret=0.01, cap=1e-6, logsize=5.0)
    t.add_firm("F2", daily_ret=0.0, cap=1e9, logsize=5.0)
    t.add_report("R1", "F1", t.days[6])
    ds = load_dataset(t.write())
    got = car(ds, "F1", ds.calendar.day(6), horizon=1)
    benchmark_growth = (1e-6 * 1.01**2 + 1e9 * 1.0) / (1e-6 + 1e9)
    assert got == pytest.approx(1.01**2 - benchmark_growth, abs=1e-9)
    assert got == pytest.approx(0.0201, abs=1e-6)


def test_car_matches_product_difference_oracle(mini_dataset):
    ctx = EventContext(mini_dataset, bins=3)
    rng = np.random.default_rng(1)
    firms = list(mini_dataset.market.returns.columns)
    for _ in range(10):
        firm = firms[rng.integers(len(firms))]
        i0 = int(rng.integers(42, 400))
        T = int(rng.integers(1, 40))
        path = ctx.car_path(firm, i0, T)
        if path is None:
            continue
        r = mini_dataset.market.returns[firm].to_numpy()[i0 : i0 + T + 1]
        b = ctx.panel.bench_returns[firm].to_numpy()[i0 : i0 + T + 1]
        expected = np.cumprod(1 + r) - np.cumprod(1 + b)
        np.testing.assert_allclose(path, expected, atol=1e-12)


def test_identical_events_collapse_every_curve(tmp_path):
    # same returns, caps, characteristics, and predictions: all CAR paths are
    # exactly zero, so every decile curve and the spread vanish identically
    ds = _uniform_universe(tmp_path, n_firms=12, identical=True)
    fr = _forecast_frame([
        (f"R{i}", f"F{i}", ds.reports.loc[f"R{i}", "release_date"], 0.05) for i in range(12)
    ])
    curves = event_decile_curves(ds, fr, horizon=5, bins=2)
    for label, curve in curves.items():
        np.testing.assert_allclose(curve.car, 0.0, atol=1e-12)
    assert "hl" in curves


def test_single_event_curve_is_its_car_path(tmp_path):
    t = TinyInputs(tmp_path, n_months=3, days_per_month=5)
    rng = np.random.default_rng(2)
    t.add_firm("F1", daily_ret=list(rng.normal(0.001, 0.01, 15)), cap=10.0)
    t.add_firm("F2", daily_ret=0.0, cap=1000.0)
    t.add_report("R1", "F1", t.days[6])
    ds = load_dataset(t.write())
    fr = _forecast_frame([("R1", "F1", ds.reports.loc["R1", "release_date"], 0.1)])
    curves = event_decile_curves(ds, fr, horizon=4, bins=2, min_day_count=1)
    ctx = EventContext(ds, bins=2)
    expected = ctx.car_path("F1", int(ds.reports.loc["R1", "day0_idx"]), 4)
    only = [c for label, c in curves.items() if c.n_events == 1][0]
    np.testing.assert_allclose(only.car, expected, atol=1e-15)


def test_hl_curve_is_pointwise_difference(mini_dataset, mini_run):
    curves = event_decile_curves(mini_dataset, mini_run.forecasts, horizon=42, bins=3)
    np.testing.assert_allclose(
        curves["hl"].car, curves["d10"].car - curves["d1"].car, atol=1e-15
    )
    assert curves["hl"].car[0] == pytest.approx(
        curves["d10"].car[0] - curves["d1"].car[0], abs=1e-15
    )


def test_planted_drift_shows_in_spread(mini_dataset, mini_run, mini_dir):
    import json

    manifest = json.loads((mini_dir / "manifest.json").read_text())
    planted = manifest["spec"]["signal_spreads"]["g3"]
    curves = event_decile_curves(mini_dataset, mini_run.forecasts, horizon=252, bins=3)
    # small fixture: generous band around the planted annual drift
    assert curves["hl"].car[-1] == pytest.approx(planted, abs=0.04)
    assert curves["hl"].car[-1] > 0


def test_thin_days_fall_back_to_monthly_breakpoints(mini_dataset, mini_run, caplog):
    events = prepare_events(mini_dataset, mini_run.forecasts.head(400), horizon=10, bins=3)
    from narralpha.eventstudy import assign_event_deciles

    deciles = assign_event_deciles(events, min_day_count=10)
    assert set(deciles) <= set(range(1, 11))
    assert (deciles >= 1).all()


def test_nw_tstat_of_mean_matches_ols_route():
    from narralpha.econometrics import ols

    rng = np.random.default_rng(3)
    x = rng.normal(0.01, 0.05, 60)
    mean, t = nw_tstat_of_mean(x, 12)
    res = ols(np.ones((60, 1)), x, se_type="nw", lags=12, names=["m"])
    assert mean == pytest.approx(res.params[0], abs=1e-14)
    assert t == pytest.approx(res.tstats[0], rel=1e-10)
