import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from narralpha.errors import UserError
from narralpha.forecast import fit_ridge
from narralpha.ingest import load_dataset
from narralpha.oracles import oracle_suite
from narralpha.synth import SynthSpec, generate


def _tree_hash(root: Path) -> dict:
    out = {}
    for p in sorted(root.iterdir()):
        if p.is_file():
            out[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


def test_same_seed_byte_identical(tmp_path):
    spec = SynthSpec(n_firms=20, n_months=8, dim=8, seed=5)
    generate(spec, tmp_path / "a")
    generate(spec, tmp_path / "b")
    a, b = _tree_hash(tmp_path / "a"), _tree_hash(tmp_path / "b")
    assert a == b


def test_different_seed_differs(tmp_path):
    generate(SynthSpec(n_firms=20, n_months=8, dim=8, seed=5), tmp_path / "a")
    generate(SynthSpec(n_firms=20, n_months=8, dim=8, seed=6), tmp_path / "b")
    assert _tree_hash(tmp_path / "a") != _tree_hash(tmp_path / "b")


def test_zero_effect_market_is_null(tmp_path):
    out = tmp_path / "null"
    manifest = generate(
        SynthSpec(n_firms=40, n_months=30, dim=8, seed=2, signal_spreads={}), out
    )
    assert manifest["measured_spread_annualized"] == {}
    ds = load_dataset(out / "inputs.json")
    from narralpha.forecast import expanding_forecasts
    from narralpha.portfolio import strategy_returns

    run = expanding_forecasts(ds, burn_in_months=14)
    series = strategy_returns(ds, run.forecasts, lb=6)
    hl = series["hl"].returns
    t = float(hl.mean() / (hl.std(ddof=1) / np.sqrt(len(hl))))
    assert abs(t) < 3.0


def test_manifest_spread_near_planted(mini_dir):
    manifest = json.loads((mini_dir / "manifest.json").read_text())
    planted = manifest["spec"]["signal_spreads"]["g3"]
    measured = manifest["measured_spread_annualized"]["g3"]
    # 60 firms x 48 months: sampling tolerance about 3 standard errors
    assert measured == pytest.approx(planted, abs=0.045)


def test_infeasible_spread_rejected(tmp_path):
    with pytest.raises(UserError, match="infeasible"):
        generate(SynthSpec(n_firms=20, n_months=8, signal_spreads={"g3": 5.0}), tmp_path)


def test_unknown_signal_group_rejected(tmp_path):
    with pytest.raises(UserError, match="not in partition"):
        generate(SynthSpec(n_firms=20, n_months=8, signal_spreads={"zz": 0.05}), tmp_path)


def test_delistings_produce_gaps(tmp_path):
    out = tmp_path / "del"
    generate(SynthSpec(n_firms=30, n_months=24, dim=8, seed=3, delist_frac=0.2), out)
    ds = load_dataset(out / "inputs.json")
    lengths = ds.market.returns.notna().sum(axis=0)
    assert lengths.min() < lengths.max()


# -- oracle suite self-checks --------------------------------------------------

def test_ridge_oracle_agrees_with_closed_form():
    oracles = oracle_suite()
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(20):
        X = rng.standard_normal((30, 6))
        y = rng.standard_normal(30)
        theta = float(rng.uniform(0.1, 10.0))
        b0, coef = oracles.ridge_gd(X, y, theta)
        m = fit_ridge(X, y, theta)
        worst = max(worst, abs(b0 - m.intercept), float(np.abs(coef - m.coef).max()))
    assert worst < 1e-8


def test_shapley_oracle_matches_exact_enumeration():
    from narralpha.attribution import exact_from_value_table

    oracles = oracle_suite()
    rng = np.random.default_rng(7)
    values = rng.standard_normal(256)
    phi = oracles.shapley_permutation_enum(values, 8)
    np.testing.assert_allclose(phi, exact_from_value_table(values, tol=1e-6), atol=1e-12)


def test_turnover_oracle_matches_engine_on_random_paths():
    import pandas as pd

    from narralpha.portfolio import StrategySeries, leg_turnover

    oracles = oracle_suite()
    rng = np.random.default_rng(8)
    months = pd.period_range("2018-01", periods=50, freq="M")
    assets = [f"S{i}" for i in range(8)]
    weights = {}
    for m in months:
        raw = rng.uniform(0.05, 1.0, 8)
        weights[m] = dict(zip(assets, raw / raw.sum()))
    rets = pd.DataFrame(rng.normal(0.005, 0.04, (50, 8)), index=months, columns=assets)
    rf = pd.Series(rng.uniform(0, 0.003, 50), index=months)
    series = StrategySeries("x", pd.Series(0.0, index=months), {m: pd.Series(w) for m, w in weights.items()})
    got = leg_turnover(series, rets, rf)
    expected = oracles.drift_turnover(
        [weights[m] for m in months],
        [rets.loc[m].to_dict() for m in months[1:]],
        [float(rf[m]) for m in months[1:]],
    )
    np.testing.assert_allclose(got.to_numpy(), expected, atol=1e-12)
