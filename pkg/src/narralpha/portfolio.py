"""Monthly value-weighted decile portfolios from trailing-average forecasts.

Builds signals from trailing report forecasts, sorts firms into deciles,
tracks value-weighted returns and weights, and derives performance
statistics, turnover, net-of-cost returns, combinations, and conditional
double sorts.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .dataset import Dataset, MarketData
from .econometrics import add_intercept, ols

log = logging.getLogger(__name__)

FACTOR_MODELS = {
    "capm": ["mktrf"],
    "ff3": ["mktrf", "smb", "hml"],
    "ff5": ["mktrf", "smb", "hml", "rmw", "cma"],
    "ff6": ["mktrf", "smb", "hml", "rmw", "cma", "mom"],
}


@dataclass
class SignalSnapshot:
    """Per-firm signal and lagged cap for one formation month."""

    month: pd.Period
    table: pd.DataFrame   # index firm_id; columns signal, n_reports, lagged_cap


@dataclass
class StrategySeries:
    """Monthly return series for a portfolio leg or spread, plus weights."""

    label: str
    returns: pd.Series                       # PeriodIndex months
    weights: dict[pd.Period, pd.Series] = field(default_factory=dict)


@dataclass
class PerfStats:
    mean: float            # % per month
    sd: float              # % per month
    sharpe: float          # annualized
    alpha: float           # % per month
    alpha_t: float
    turnover: float | None = None

    def as_dict(self) -> dict:
        out = {
            "mean": self.mean, "sd": self.sd, "sharpe": self.sharpe,
            "alpha": self.alpha, "alpha_t": self.alpha_t,
        }
        if self.turnover is not None:
            out["turnover"] = self.turnover
        return out


def decile_of_rank(ranks: np.ndarray, n: int, buckets: int = 10) -> np.ndarray:
    """Bucket k gets 1-based ranks in ((k-1)n/B, kn/B]; populations differ by <= 1."""
    return np.ceil(ranks * buckets / n).astype(int)


def rank_with_tiebreak(values: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """1-based ranks ascending by value, ties broken by id ascending."""
    order = np.lexsort((ids, values))
    ranks = np.empty(len(values), dtype=int)
    ranks[order] = np.arange(1, len(values) + 1)
    return ranks


def build_signal(forecasts: pd.DataFrame, market: MarketData, month: pd.Period, lb: int) -> SignalSnapshot:
    """Average predicted return per firm over reports in [month-lb, month-1].

    Firms without a report in the window, or without a positive lagged
    month-end cap, are absent from the snapshot.
    """
    if lb < 1:
        raise ValueError("lookback must be >= 1")
    fr = forecasts
    if "release_month" not in fr.columns:
        fr = fr.assign(release_month=pd.PeriodIndex(fr["release_date"].dt.to_period("M")))
    window = fr[(fr["release_month"] >= month - lb) & (fr["release_month"] <= month - 1)]
    grouped = window.groupby("firm_id")["predicted_return"].agg(["mean", "size"])
    caps = market.lagged_caps(month)
    table = grouped.join(caps.rename("lagged_cap"), how="inner").dropna()
    table = table[table["lagged_cap"] > 0]
    table = table.rename(columns={"mean": "signal", "size": "n_reports"}).sort_index()
    return SignalSnapshot(month=month, table=table)


def form_deciles(snapshot: SignalSnapshot, min_breadth: int = 10) -> pd.DataFrame:
    """Assign deciles (1..10 ascending by signal) and within-decile cap weights."""
    table = snapshot.table
    n = len(table)
    if n < min_breadth:
        raise ValueError(f"only {n} firms in snapshot; need at least {min_breadth}")
    ranks = rank_with_tiebreak(table["signal"].to_numpy(), table.index.to_numpy())
    deciles = decile_of_rank(ranks, n)
    out = pd.DataFrame({"decile": deciles, "lagged_cap": table["lagged_cap"]}, index=table.index)
    cap_sums = out.groupby("decile")["lagged_cap"].transform("sum")
    out["weight"] = out["lagged_cap"] / cap_sums
    return out


def strategy_returns(
    dataset: Dataset,
    forecasts: pd.DataFrame,
    lb: int = 12,
    start: pd.Period | None = None,
    end: pd.Period | None = None,
    min_breadth: int = 10,
) -> dict[str, StrategySeries]:
    """Backtest decile portfolios plus the H-L spread over the sample.

    A firm with a positive weight but no return in a month contributes zero
    for that month (weight reallocates at the next rebalance); months with
    fewer than ``min_breadth`` signal firms are skipped. Keys are ``d1``..
    ``d10`` and ``hl``.
    """
    fr = forecasts.assign(release_month=pd.PeriodIndex(forecasts["release_date"].dt.to_period("M")))
    monthly = dataset.market.monthly_returns()
    if fr.empty:
        raise ValueError("no forecasts supplied")
    first = fr["release_month"].min() + 1
    last = monthly.index.max()
    if start is not None:
        first = max(first, start)
    if end is not None:
        last = min(last, end)

    rets: dict[str, dict[pd.Period, float]] = {f"d{k}": {} for k in range(1, 11)}
    rets["hl"] = {}
    weights: dict[str, dict[pd.Period, pd.Series]] = {f"d{k}": {} for k in range(1, 11)}
    weights["hl"] = {}

    for month in pd.period_range(first, last, freq="M"):
        snap = build_signal(fr, dataset.market, month, lb)
        if len(snap.table) < min_breadth:
            if len(snap.table):
                log.info("skipping %s: breadth %d < %d", month, len(snap.table), min_breadth)
            continue
        deciles = form_deciles(snap, min_breadth=min_breadth)
        month_rets = monthly.loc[month] if month in monthly.index else pd.Series(dtype=float)
        firm_rets = month_rets.reindex(deciles.index)
        missing = firm_rets.isna()
        if missing.any():
            log.info("%s: %d held firms missing returns, treated as 0", month, int(missing.sum()))
            firm_rets = firm_rets.fillna(0.0)
        for k in range(1, 11):
            members = deciles[deciles["decile"] == k]
            w = members["weight"]
            rets[f"d{k}"][month] = float((w * firm_rets.loc[members.index]).sum())
            weights[f"d{k}"][month] = w
        rets["hl"][month] = rets["d10"][month] - rets["d1"][month]
        weights["hl"][month] = (
            weights["d10"][month].reindex(deciles.index, fill_value=0.0)
            - weights["d1"][month].reindex(deciles.index, fill_value=0.0)
        )
        weights["hl"][month] = weights["hl"][month][weights["hl"][month] != 0.0]

    out = {}
    for key in rets:
        idx = pd.PeriodIndex(sorted(rets[key]), freq="M")
        out[key] = StrategySeries(
            label=key,
            returns=pd.Series([rets[key][m] for m in idx], index=idx, dtype=float),
            weights=weights[key],
        )
    return out


def _factor_columns(factors: pd.DataFrame, model) -> list[str]:
    cols = FACTOR_MODELS[model] if isinstance(model, str) else list(model)
    missing = [c for c in cols if c not in factors.columns]
    if missing:
        raise ValueError(f"factor columns missing from panel: {missing}")
    return cols


def perf_stats(
    series: pd.Series,
    factors: pd.DataFrame,
    model="ff6",
    leg: str = "ls",
    nw_lags: int = 12,
) -> PerfStats:
    """Mean/SD (% per month), annualized Sharpe, and factor alpha with NW t.

    Long legs are evaluated in excess of the risk-free rate; long-short
    spreads are already zero-cost and enter raw.
    """
    if len(series) < 24:
        raise ValueError("need at least 24 months")
    if not series.index.isin(factors.index).all():
        raise ValueError("factor panel does not cover the series months")
    fac = factors.loc[series.index]
    y = series - fac["rf"] if leg == "long" else series.copy()
    mean = float(y.mean()) * 100.0
    sd = float(y.std(ddof=1)) * 100.0
    cols = _factor_columns(factors, model)
    X = add_intercept(fac[cols].to_numpy())
    res = ols(X, y.to_numpy(), se_type="nw", lags=nw_lags, names=["alpha"] + cols)
    return PerfStats(
        mean=mean,
        sd=sd,
        sharpe=mean / sd * math.sqrt(12.0) if sd > 0 else float("nan"),
        alpha=float(res.params[0]) * 100.0,
        alpha_t=float(res.tstats[0]),
    )


def sharpe_ratio(mean_pct: float, sd_pct: float) -> float:
    """Annualized Sharpe from monthly mean and SD in percent."""
    return mean_pct / sd_pct * math.sqrt(12.0)


def drift_weights(w: pd.Series, excess_returns: pd.Series, rf: float) -> pd.Series:
    """Passively evolved weights after one period of returns."""
    r = excess_returns.reindex(w.index, fill_value=0.0)
    growth = 1.0 + rf + r
    denom = 1.0 + rf + float((w * r).sum())
    if denom == 0.0:
        raise ZeroDivisionError("portfolio wiped out: zero total return")
    return w * growth / denom


def leg_turnover(series: StrategySeries, monthly_returns: pd.DataFrame, rf: pd.Series) -> pd.Series:
    """L1 distance between target weights and drifted prior weights, monthly.

    Defined for each month with weights in the immediately preceding month;
    the initial buy-in is not counted.
    """
    months = sorted(series.weights)
    out = {}
    for prev, cur in zip(months[:-1], months[1:]):
        if cur != prev + 1:
            continue
        w_prev = series.weights[prev]
        rf_cur = float(rf.get(cur, 0.0))
        rets = monthly_returns.loc[cur] if cur in monthly_returns.index else pd.Series(dtype=float)
        excess = rets.reindex(w_prev.index).fillna(0.0) - rf_cur
        drifted = drift_weights(w_prev, excess, rf_cur)
        w_cur = series.weights[cur]
        union = w_cur.index.union(drifted.index)
        gap = w_cur.reindex(union, fill_value=0.0) - drifted.reindex(union, fill_value=0.0)
        out[cur] = float(np.abs(gap).sum())
    idx = pd.PeriodIndex(sorted(out), freq="M")
    return pd.Series([out[m] for m in idx], index=idx, dtype=float)


def turnover_summary(
    long: StrategySeries,
    short: StrategySeries,
    monthly_returns: pd.DataFrame,
    rf: pd.Series,
) -> dict:
    """Average monthly turnover per leg plus both combined conventions.

    ``ls_mean_of_legs`` averages the two leg turnovers (headline convention);
    ``ls_sum_of_legs`` adds them and is the base on which costs are charged.
    """
    to_long = leg_turnover(long, monthly_returns, rf)
    to_short = leg_turnover(short, monthly_returns, rf)
    both = to_long.index.intersection(to_short.index)
    return {
        "long": float(to_long.mean()),
        "short": float(to_short.mean()),
        "ls_mean_of_legs": float(((to_long[both] + to_short[both]) / 2.0).mean()),
        "ls_sum_of_legs": float((to_long[both] + to_short[both]).mean()),
        "series": {"long": to_long, "short": to_short},
    }


def net_returns(
    series: StrategySeries,
    turnover: pd.Series,
    cost: float,
    rf: pd.Series,
) -> StrategySeries:
    """Net-of-cost returns: (1+rf+R)(1 - cost*turnover) - (1+rf).

    Months without a turnover observation (the initial month) are uncharged.
    """
    if cost < 0:
        raise ValueError("cost must be >= 0")
    out = {}
    for month, gross in series.returns.items():
        to = float(turnover.get(month, 0.0))
        rf_m = float(rf.get(month, 0.0))
        charge = cost * to
        if charge == 0.0:
            out[month] = gross  # algebraically identical, exact in floats
        else:
            out[month] = (1.0 + rf_m + gross) * (1.0 - charge) - (1.0 + rf_m)
    idx = series.returns.index
    return StrategySeries(
        label=f"{series.label}_net",
        returns=pd.Series([out[m] for m in idx], index=idx, dtype=float),
        weights=series.weights,
    )


def combine_strategies(components: list[StrategySeries], scheme: str = "equal") -> StrategySeries:
    """Month-by-month equal-weight average of component returns."""
    if scheme != "equal":
        raise ValueError(f"unknown scheme {scheme!r}")
    if not components:
        raise ValueError("no components")
    base = components[0].returns.index
    for c in components[1:]:
        if not c.returns.index.equals(base):
            raise ValueError("component months are misaligned")
    stacked = pd.concat([c.returns for c in components], axis=1)
    return StrategySeries(label="combo", returns=stacked.mean(axis=1))


def information_ratio(combined: StrategySeries, benchmark: StrategySeries, nw_lags: int = 12) -> tuple[float, float]:
    """Annualized IR of combined over benchmark, with a NW t-stat on the mean."""
    a, b = combined.returns, benchmark.returns
    if not a.index.equals(b.index):
        raise ValueError("misaligned months")
    if len(a) < 24:
        raise ValueError("need at least 24 months")
    diff = (a - b).to_numpy()
    sd = diff.std(ddof=1)
    if sd == 0:
        raise ValueError("zero-variance excess return")
    ir = diff.mean() / sd * math.sqrt(12.0)
    res = ols(np.ones((len(diff), 1)), diff, se_type="nw", lags=nw_lags, names=["mean"])
    return float(ir), float(res.tstats[0])


@dataclass
class DoubleSortResult:
    """Event curves for the four characteristic x forecast cells."""

    curves: dict            # cell label -> EventCurve
    spread_diff: float      # (AH-AL)-(BH-BL) at the final horizon day
    spread_diff_t: float
    n_months: int
    skipped_months: list


def conditional_double_sort(
    dataset: Dataset,
    characteristic: str,
    forecasts: pd.DataFrame,
    horizon: int = 252,
    bins: int = 5,
    min_group_firms: int = 10,
) -> DoubleSortResult:
    """Median-split on a lagged characteristic crossed with forecast deciles.

    Events are split Above/Below the monthly median of the characteristic
    (lagged one month) and intersected with the top/bottom forecast deciles
    of the event study's daily sort. Months where a group has fewer than
    ``min_group_firms`` firms are skipped for that group.
    """
    from .eventstudy import assign_event_deciles, curves_by_group, prepare_events

    events = prepare_events(dataset, forecasts, horizon=horizon, bins=bins)
    events["decile"] = assign_event_deciles(events)
    chars = dataset.market.chars
    if characteristic not in chars.columns:
        raise ValueError(f"unknown characteristic {characteristic!r}")

    month_key = events["month"]
    values = np.full(len(events), np.nan)
    for i, (m, firm) in enumerate(zip(month_key, events["firm_id"])):
        try:
            values[i] = chars.loc[(m - 1, firm), characteristic]
        except KeyError:
            continue
    events = events.assign(char=values).dropna(subset=["char"])

    skipped = []
    labels = np.full(len(events), "", dtype=object)
    for m, idx in events.groupby("month").groups.items():
        sub = events.loc[idx]
        med = sub.drop_duplicates("firm_id")["char"].median()
        above = sub["char"] > med
        for side, mask in (("above", above), ("below", ~above)):
            firms = sub.loc[mask, "firm_id"].nunique()
            if firms < min_group_firms:
                skipped.append((m, side))
                continue
            sel = sub.index[mask]
            labels[events.index.get_indexer(sel)] = side
    events = events.assign(group=labels)
    events = events[events["group"] != ""]

    cells = {
        "above_high": (events["group"] == "above") & (events["decile"] == 10),
        "above_low": (events["group"] == "above") & (events["decile"] == 1),
        "below_high": (events["group"] == "below") & (events["decile"] == 10),
        "below_low": (events["group"] == "below") & (events["decile"] == 1),
    }
    tagged = events.assign(cell="")
    for name, mask in cells.items():
        tagged.loc[mask, "cell"] = name
    tagged = tagged[tagged["cell"] != ""]
    curves, monthly_means = curves_by_group(tagged, "cell", horizon)

    common = None
    for name in cells:
        months = set(monthly_means.get(name, {}))
        common = months if common is None else common & months
    common = sorted(common or [])
    diffs = np.array(
        [
            (monthly_means["above_high"][m][-1] - monthly_means["above_low"][m][-1])
            - (monthly_means["below_high"][m][-1] - monthly_means["below_low"][m][-1])
            for m in common
        ]
    )
    if len(diffs):
        res = ols(np.ones((len(diffs), 1)), diffs, se_type="nw", lags=min(12, len(diffs) - 1), names=["m"])
        spread_diff, spread_t = float(diffs.mean()), float(res.tstats[0])
    else:
        spread_diff, spread_t = float("nan"), float("nan")
    return DoubleSortResult(
        curves=curves,
        spread_diff=spread_diff,
        spread_diff_t=spread_t,
        n_months=len(common),
        skipped_months=skipped,
    )
