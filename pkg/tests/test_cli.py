import json
from pathlib import Path

import pandas as pd
import pytest

from narralpha.cli import main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    spec = {
        "n_firms": 40, "n_months": 42, "dim": 8, "seed": 9,
        "signal_spreads": {"g2": 0.05},
    }
    (out / "spec.json").write_text(json.dumps(spec))
    assert main(["synth", "--spec", str(out / "spec.json"), "--out", str(out / "data")]) == 0
    return out


def test_synth_then_ingest(workdir):
    rc = main([
        "ingest", "--config", str(workdir / "data" / "inputs.json"),
        "--rejects", str(workdir / "rejects.csv"),
    ])
    assert rc == 0
    rejects = pd.read_csv(workdir / "rejects.csv")
    assert len(rejects) == 0


def test_forecast_backtest_eventstudy_shapley(workdir):
    cfg = str(workdir / "data" / "inputs.json")
    fc = workdir / "forecasts.csv"
    assert main([
        "forecast", "--config", cfg, "--burn-in", "14",
        "--grid", "log:1e-2:1e6:5", "--label-policy", "labels-realized",
        "--out", str(fc),
    ]) == 0
    frame = pd.read_csv(fc)
    assert set(frame.columns) == {"report_id", "firm_id", "release_date", "predicted_return"}

    stats = workdir / "stats.json"
    series_csv = workdir / "series.csv"
    assert main([
        "backtest", "--config", cfg, "--signal", str(fc), "--lb", "12",
        "--cost-bps", "35", "--model", "ff6",
        "--factors", str(workdir / "data" / "factors.csv"),
        "--combos", "mktrf", "--series-out", str(series_csv), "--out", str(stats),
    ]) == 0
    payload = json.loads(stats.read_text())
    assert "hl" in payload["deciles"]
    assert payload["deciles"]["hl"]["mean"] > 0
    assert payload["combo"]["ir_vs_component"]["mktrf"]["ir"] is not None
    series = pd.read_csv(series_csv)
    assert set(series.columns) == {"label", "month", "ret"}
    assert payload["months"] == (series["label"] == "hl").sum()

    curves = workdir / "curves.csv"
    assert main([
        "eventstudy", "--config", cfg, "--forecasts", str(fc),
        "--horizon", "63", "--bins", "2", "--out", str(curves),
    ]) == 0
    table = pd.read_csv(curves)
    assert set(table.columns) == {"label", "day", "car", "t"}
    assert table[table["label"] == "hl"]["day"].max() == 63

    shap = workdir / "shap.json"
    assert main([
        "shapley", "--config", cfg, "--mode", "exact", "--burn-in", "14",
        "--grid", "log:1e-2:1e6:5", "--out", str(shap),
    ]) == 0
    payload = json.loads(shap.read_text())
    sig = payload["groups"].index("g2")
    shares = payload["share_of_span"]["sr"]
    assert shares[sig] == max(shares) and shares[sig] > 0.3


def test_signals_command(workdir):
    out = workdir / "signals.csv"
    assert main([
        "signals", "--config", str(workdir / "data" / "inputs.json"),
        "--no-car", "--out", str(out),
    ]) == 0
    table = pd.read_csv(out)
    assert {"report_id", "tone", "rec_rev", "sue"} <= set(table.columns)


def test_regress_command(workdir, capsys):
    csv = workdir / "panel.csv"
    import numpy as np

    rng = np.random.default_rng(0)
    n = 500
    g = rng.integers(0, 10, n)
    x = rng.standard_normal(n)
    y = 0.8 * x + g * 0.1 + rng.standard_normal(n)
    pd.DataFrame({"y": y, "x": x, "g": g, "c": g}).to_csv(csv, index=False)
    assert main([
        "regress", "--csv", str(csv), "--y", "y", "--x", "x",
        "--fe", "g", "--cluster", "g,c",
    ]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["coef"]["x"] == pytest.approx(0.8, abs=0.15)


def test_missing_config_is_user_error(tmp_path):
    rc = main(["ingest", "--config", str(tmp_path / "nope.json"), "--rejects", str(tmp_path / "r.csv")])
    assert rc == 1


def test_bad_grid_is_internal_error_free(tmp_path, workdir):
    rc = main([
        "forecast", "--config", str(workdir / "data" / "inputs.json"),
        "--grid", "nonsense", "--out", str(tmp_path / "x.csv"),
    ])
    assert rc == 2  # malformed flag surfaces as an internal error, not a crash
