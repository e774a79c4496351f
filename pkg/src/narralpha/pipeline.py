"""Full-run orchestration: ingest, forecast, backtest, event study, attribution.

A single config file describes a reproduction run; outputs are deterministic
given the config and seed, and every artifact declares the config hash that
produced it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import platform
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .attribution import (
    CoalitionEngine,
    identity_partition,
    mapped_partition,
    shapley_exact,
    shapley_mc,
)
from .dataset import Dataset
from .econometrics import panel_regression
from .errors import UserError
from .eventstudy import EventContext, event_decile_curves
from .forecast import ForecastRun, audit_no_lookahead, expanding_forecasts, parse_grid
from .ingest import IngestConfig, load_config_file, load_dataset
from .portfolio import (
    StrategySeries,
    net_returns,
    perf_stats,
    strategy_returns,
    turnover_summary,
)
from .signals import decile_profile, report_signals

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    """Fully resolved description of one reproduction run."""

    ingest: IngestConfig
    burn_in_months: int = 24
    grid: str = "log:1e-2:1e6:9"
    label_policy: str = "labels-realized"
    folds: int = 5
    cv_purge: int = 0
    scale_features: bool = False
    horizon_months: int = 12
    lookbacks: list[int] = field(default_factory=lambda: [12])
    cost_bps: list[float] = field(default_factory=lambda: [35.0, 60.0])
    factor_model: str = "ff6"
    min_breadth: int = 10
    combos: list[str] = field(default_factory=list)
    event_horizon: int = 252
    event_bins: int = 3
    partition: str = "file"
    group_map: dict | None = None
    background: list[str] = field(default_factory=list)
    shapley_mode: str = "exact"
    shapley_samples: int = 1000
    shapley_lookback: int = 12
    windows: list[dict] = field(default_factory=list)
    seed: int = 0
    threads: int = 1
    output_dir: Path = Path("artifacts")
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path, seed: int | None = None, threads: int | None = None) -> "RunConfig":
        raw = load_config_file(path)
        ingest = IngestConfig.from_file(path)
        fc = raw.get("forecast", {})
        bt = raw.get("backtest", {})
        ev = raw.get("eventstudy", {})
        at = raw.get("attribution", {})
        out = raw.get("output", {})
        base = Path(path).resolve().parent
        outdir = Path(out.get("dir", "artifacts"))
        if not outdir.is_absolute():
            outdir = base / outdir
        cfg = cls(
            ingest=ingest,
            burn_in_months=int(fc.get("burn_in_months", 24)),
            grid=str(fc.get("grid", "log:1e-2:1e6:9")),
            label_policy=str(fc.get("label_policy", "labels-realized")),
            folds=int(fc.get("folds", 5)),
            cv_purge=int(fc.get("cv_purge", 0)),
            scale_features=bool(fc.get("scale_features", False)),
            horizon_months=int(fc.get("horizon_months", 12)),
            lookbacks=[int(v) for v in bt.get("lookbacks", [12])],
            cost_bps=[float(v) for v in bt.get("cost_bps", [35.0, 60.0])],
            factor_model=str(bt.get("factor_model", "ff6")),
            min_breadth=int(bt.get("min_breadth", 10)),
            combos=[str(v) for v in bt.get("combos", [])],
            event_horizon=int(ev.get("horizon_days", 252)),
            event_bins=int(ev.get("bins", 3)),
            partition=str(at.get("partition", "file")),
            group_map=at.get("group_map"),
            background=list(at.get("background", [])),
            shapley_mode=str(at.get("mode", "exact")),
            shapley_samples=int(at.get("samples", 1000)),
            shapley_lookback=int(at.get("lookback", 12)),
            windows=list(raw.get("windows", [])),
            seed=int(out.get("seed", 0)),
            threads=int(out.get("threads", 1)),
            output_dir=outdir,
            raw=raw,
        )
        if seed is not None:
            cfg.seed = seed
        if threads is not None:
            cfg.threads = threads
        return cfg

    def config_hash(self) -> str:
        """Digest of the analytical configuration; where outputs land and how
        many workers run are execution details and excluded."""
        payload = dict(self.raw)
        out = dict(payload.get("output", {}))
        out.pop("dir", None)
        out.pop("threads", None)
        payload["output"] = out
        payload["__seed__"] = self.seed
        blob = json.dumps(payload, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if not np.isfinite(v) else v
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (pd.Period, pd.Timestamp, Path)):
        return str(obj)
    return obj


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_json_safe(payload), sort_keys=True, indent=2) + "\n")


def write_series_csv(path: Path, series_map: dict, config_hash: str | None = None) -> None:
    """Long-format monthly return series (label,month,ret) for plotting."""
    with open(path, "w") as f:
        if config_hash:
            f.write(f"# config_hash={config_hash}\n")
        f.write("label,month,ret\n")
        for label in series_map:
            for month, value in series_map[label].items():
                f.write(f"{label},{month},{value:.10g}\n")


def _window_bounds(window: dict) -> tuple[pd.Period | None, pd.Period | None]:
    start = pd.Period(window["start"], freq="M") if window.get("start") else None
    end = pd.Period(window["end"], freq="M") if window.get("end") else None
    return start, end


def backtest_stats(
    dataset: Dataset,
    forecasts: pd.DataFrame,
    lb: int,
    factor_model: str,
    cost_bps: list[float],
    min_breadth: int = 10,
    start: pd.Period | None = None,
    end: pd.Period | None = None,
    combos: list[str] | None = None,
) -> dict:
    """Decile and spread statistics plus turnover and net means for one lookback.

    ``combos`` names factor columns (zero-cost monthly return series) to
    average 1/N with the spread; each combination reports its information
    ratio against every component.
    """
    from .portfolio import FACTOR_MODELS, StrategySeries, combine_strategies, information_ratio

    series = strategy_returns(
        dataset, forecasts, lb=lb, start=start, end=end, min_breadth=min_breadth
    )
    factors = dataset.factors
    rf = factors["rf"]
    monthly = dataset.market.monthly_returns()
    out: dict = {"lookback": lb, "months": len(series["hl"].returns)}
    table = {}
    for key in [f"d{k}" for k in range(1, 11)] + ["hl"]:
        leg = "ls" if key == "hl" else "long"
        stats = perf_stats(series[key].returns, factors, model=factor_model, leg=leg)
        table[key] = stats.as_dict()
    out["deciles"] = table

    # spread alphas under every named factor model the panel can support
    alphas = {}
    for name, cols in FACTOR_MODELS.items():
        if all(c in factors.columns for c in cols):
            stats = perf_stats(series["hl"].returns, factors, model=name, leg="ls")
            alphas[name] = {"alpha": stats.alpha, "t": stats.alpha_t}
    out["hl_alphas"] = alphas

    to = turnover_summary(series["d10"], series["d1"], monthly, rf)
    out["turnover"] = {k: v for k, v in to.items() if k != "series"}
    cost_base = (to["series"]["long"] + to["series"]["short"]).dropna()
    net = {}
    for bps in cost_bps:
        net_series = net_returns(series["hl"], cost_base, bps / 1e4, rf)
        net[str(int(bps))] = {
            "mean": float(net_series.returns.mean()) * 100.0,
            "months": len(net_series.returns),
        }
    out["net_mean"] = net

    if combos:
        months = series["hl"].returns.index
        components = {"hl": series["hl"]}
        for col in combos:
            if col not in factors.columns:
                raise ValueError(f"combo component {col!r} not in the factor panel")
            components[col] = StrategySeries(col, factors.loc[months, col])
        combined = combine_strategies(list(components.values()))
        combo_stats = {
            "components": list(components),
            "mean": float(combined.returns.mean()) * 100.0,
            "sd": float(combined.returns.std(ddof=1)) * 100.0,
            "ir_vs_component": {},
        }
        combo_stats["sharpe"] = (
            combo_stats["mean"] / combo_stats["sd"] * math.sqrt(12.0)
            if combo_stats["sd"] > 0 else None
        )
        for name, comp in components.items():
            ir, t = information_ratio(combined, comp)
            combo_stats["ir_vs_component"][name] = {"ir": ir, "t": t}
        out["combo"] = combo_stats

    # monthly return series ride along for CSV export; callers pop before JSON
    out["_series"] = {key: series[key].returns for key in [f"d{k}" for k in range(1, 11)] + ["hl"]}
    return out


def run(config: RunConfig) -> Path:
    """Execute the full pipeline and write the artifact directory."""
    outdir = config.output_dir
    outdir.mkdir(parents=True, exist_ok=True)
    chash = config.config_hash()
    log.info("run %s -> %s", chash, outdir)

    dataset = load_dataset(config.ingest)
    dataset.rejects.to_csv(outdir / "rejects.csv", index=False)

    run_fc = expanding_forecasts(
        dataset,
        burn_in_months=config.burn_in_months,
        label_policy=config.label_policy,
        grid=parse_grid(config.grid),
        folds=config.folds,
        cv_purge=config.cv_purge,
        scale_features=config.scale_features,
        horizon_months=config.horizon_months,
    )
    if run_fc.forecasts.empty:
        raise UserError("no out-of-sample forecasts produced; check burn-in and data span")
    fc = run_fc.forecasts.copy()
    fc["release_date"] = fc["release_date"].dt.strftime("%Y-%m-%d")
    fc.to_csv(outdir / "forecasts.csv", index=False)
    forecasts = run_fc.forecasts
    violations = audit_no_lookahead(dataset, run_fc)

    # ---- stats.json + monthly series CSVs ---------------------------------
    stats: dict = {"config_hash": chash, "label_policy": config.label_policy, "windows": {}}
    windows = [{"name": "full"}] + [dict(w) for w in config.windows]
    for window in windows:
        name = window.get("name") or f"{window.get('start', '')}..{window.get('end', '')}"
        start, end = _window_bounds(window) if "start" in window or "end" in window else (None, None)
        per_lb = {}
        for lb in config.lookbacks:
            per_lb[str(lb)] = backtest_stats(
                dataset, forecasts, lb, config.factor_model, config.cost_bps,
                min_breadth=config.min_breadth, start=start, end=end,
                combos=config.combos or None,
            )
            monthly_series = per_lb[str(lb)].pop("_series")
            if name == "full":
                write_series_csv(outdir / f"series_lb{lb}.csv", monthly_series, chash)
        stats["windows"][name] = per_lb
    stats["lookahead_violations"] = violations
    write_json(outdir / "stats.json", stats)

    # ---- curves.csv ------------------------------------------------------
    context = EventContext(dataset, bins=config.event_bins)
    curves = event_decile_curves(
        dataset, forecasts, horizon=config.event_horizon, bins=config.event_bins, context=context
    )
    rows = []
    for label in sorted(curves):
        c = curves[label]
        for day in range(len(c.car)):
            rows.append((label, day, c.car[day], c.tstats[day]))
    with open(outdir / "curves.csv", "w") as f:
        f.write(f"# config_hash={chash}\n")
        f.write("label,day,car,t\n")
        for label, day, car_v, t_v in rows:
            t_txt = "" if not np.isfinite(t_v) else f"{t_v:.10g}"
            f.write(f"{label},{day},{car_v:.10g},{t_txt}\n")

    # ---- shap.json ---------------------------------------------------------
    labels = dataset.embeddings.labels
    if config.partition == "file" or config.partition == "topic":
        partition = identity_partition(labels, background=config.background)
    elif config.group_map:
        partition = mapped_partition(labels, dict(config.group_map), background=config.background)
    else:
        raise UserError(f"partition {config.partition!r} needs a group_map")
    engine = CoalitionEngine(
        dataset, run_fc, partition,
        lookback=config.shapley_lookback, min_breadth=config.min_breadth, threads=config.threads,
    )
    if config.shapley_mode == "exact":
        report = shapley_exact(engine)
    else:
        report = shapley_mc(engine, samples=config.shapley_samples, seed=config.seed)
    shap_payload = {"config_hash": chash, **report.as_dict()}
    write_json(outdir / "shap.json", shap_payload)

    # ---- profile.csv ---------------------------------------------------------
    sig = report_signals(dataset, context=context, bins=config.event_bins)
    profile = decile_profile(dataset, forecasts, sig, horizon_months=config.horizon_months)
    with open(outdir / "profile.csv", "w") as f:
        f.write(f"# config_hash={chash}\n")
        profile.index.name = "decile"
        f.write(profile.to_csv(float_format="%.10g"))

    # ---- regressions.json ------------------------------------------------------
    regressions = {"config_hash": chash}
    merged = forecasts.merge(sig, on=["report_id", "firm_id", "release_date"], how="left")
    merged["release_month"] = pd.PeriodIndex(merged["release_date"].dt.to_period("M"))
    labels_df = _realized_labels(dataset, merged, config.horizon_months)
    panel = merged.assign(realized=labels_df, ym=merged["release_month"].astype(str))
    panel = panel.dropna(subset=["realized"])
    try:
        res = panel_regression(
            panel, "realized", ["predicted_return"], fe_groups=["ym"],
            cluster_keys=("firm_id", "ym"),
        )
        regressions["predictive_panel"] = res.as_dict()
    except ValueError as exc:
        regressions["predictive_panel"] = {"error": str(exc)}
    series = strategy_returns(
        dataset, forecasts, lb=config.lookbacks[0], min_breadth=config.min_breadth
    )
    regressions["factor_loadings"] = _factor_loading_table(series["hl"], series["d10"], dataset, config)
    regressions["correlations_pct"] = _correlation_panel(series["hl"], dataset)
    write_json(outdir / "regressions.json", regressions)

    # ---- manifest --------------------------------------------------------------
    manifest = {
        "config_hash": chash,
        "seed": config.seed,
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "n_reports": int(len(dataset.reports)),
        "n_rejects": int(len(dataset.rejects)),
        "n_forecasts": int(len(forecasts)),
        "skipped_months": [str(m) for m, _ in run_fc.skipped],
        "artifacts": [
            "forecasts.csv", "stats.json", "curves.csv", "shap.json",
            "profile.csv", "regressions.json", "manifest.json",
        ],
    }
    write_json(outdir / "manifest.json", manifest)
    return outdir


def _realized_labels(dataset: Dataset, merged: pd.DataFrame, horizon_months: int) -> np.ndarray:
    from .compound import CompoundedReturns

    cr = CompoundedReturns(dataset.market.returns)
    day0 = dataset.reports["day0_idx"]
    out = np.full(len(merged), np.nan)
    for k, rec in enumerate(merged.itertuples(index=False)):
        idx = int(day0.loc[rec.report_id])
        prod = cr.window_product(rec.firm_id, idx + 1, idx + horizon_months * 21)
        if prod is not None:
            out[k] = prod - 1.0
    return out


def _correlation_panel(hl: StrategySeries, dataset: Dataset) -> dict:
    """Pairwise correlations (in percent) of the spread with the factor columns."""
    from .econometrics import correlation_matrix

    months = hl.returns.index
    cols = [c for c in dataset.factors.columns if c != "rf"]
    frame = pd.DataFrame({"hl": hl.returns})
    for c in cols:
        frame[c] = dataset.factors.loc[months, c]
    corr = correlation_matrix(frame)
    return {
        a: {b: float(corr.loc[a, b]) for b in corr.columns if b != a}
        for a in corr.index
    }


def _factor_loading_table(
    hl: StrategySeries, long_leg: StrategySeries, dataset: Dataset, config: RunConfig
) -> dict:
    from .econometrics import add_intercept, ols
    from .portfolio import FACTOR_MODELS

    cols = FACTOR_MODELS.get(config.factor_model, FACTOR_MODELS["ff6"])
    factors = dataset.factors
    out = {}
    for name, series, leg in (("long_short", hl, "ls"), ("long_only", long_leg, "long")):
        fac = factors.loc[series.returns.index]
        y = series.returns - fac["rf"] if leg == "long" else series.returns
        X = add_intercept(fac[cols].to_numpy())
        res = ols(X, y.to_numpy(), se_type="nw", lags=12, names=["alpha"] + cols)
        out[name] = res.as_dict()
    return out
