"""Characteristic-matched buy-and-hold abnormal returns in event time.

Firms are matched monthly to size x book-to-market x momentum cells built
from independent quantile sorts; the cell's value-weighted daily return is
the benchmark. Abnormal performance uses the exact product-difference form
(compounded firm return minus compounded benchmark return), never the
summed-log approximation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .compound import CompoundedReturns
from .dataset import Dataset

log = logging.getLogger(__name__)


def nw_tstat_of_mean(x: np.ndarray, lags: int) -> tuple[float, float]:
    """Mean and its Newey-West t-statistic for a single series."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    mean = x.mean()
    e = x - mean
    meat = float(e @ e)
    for j in range(1, min(lags, n - 1) + 1):
        w = 1.0 - j / (lags + 1.0)
        meat += 2.0 * w * float(e[j:] @ e[:-j])
    if meat <= 0:
        return mean, float("nan")
    se = math.sqrt(meat) / n
    return mean, mean / se


@dataclass
class BenchmarkPanel:
    """Monthly cell assignments and the resulting daily benchmark returns."""

    bench_returns: pd.DataFrame      # trading day x firm_id
    cells: pd.DataFrame              # (month, firm_id) -> size_bin, bm_bin, mom_bin, cell, weight
    bins: int


def _quantile_bins(values: np.ndarray, bins: int) -> np.ndarray:
    """Value-breakpoint bins 1..bins; tied values always share a bin."""
    order = np.sort(values)
    n = len(values)
    cuts = [order[int(np.ceil(k * n / bins)) - 1] for k in range(1, bins)]
    out = np.ones(len(values), dtype=int)
    for c in cuts:
        out += values > c
    return out


def assign_benchmarks(dataset: Dataset, bins: int = 5) -> BenchmarkPanel:
    """Build monthly characteristic cells and their value-weighted benchmarks.

    Cell membership uses the prior month's characteristics and market caps
    and is held fixed within the month. Days where a firm's cell has no
    member with a return fall back to the nearest populated cell along the
    size dimension.
    """
    if bins < 2:
        raise ValueError("bins must be >= 2")
    market = dataset.market
    returns = market.returns
    day_months = returns.index.to_period("M")
    bench = pd.DataFrame(np.nan, index=returns.index, columns=returns.columns)
    cell_rows = []

    for month in pd.PeriodIndex(sorted(set(day_months)), freq="M"):
        prior = month - 1
        try:
            ch = market.chars.loc[prior][["logsize", "bm", "mom12"]].dropna()
        except KeyError:
            continue
        caps = market.caps.loc[prior].dropna() if prior in market.caps.index else pd.Series(dtype=float)
        firms = ch.index.intersection(caps[caps > 0].index).intersection(returns.columns)
        if len(firms) == 0:
            continue
        ch = ch.loc[firms].sort_index()
        ids = ch.index.to_numpy()
        sb = _quantile_bins(ch["logsize"].to_numpy(), bins)
        bb = _quantile_bins(ch["bm"].to_numpy(), bins)
        mb = _quantile_bins(ch["mom12"].to_numpy(), bins)
        cell = (sb - 1) * bins * bins + (bb - 1) * bins + (mb - 1)
        w = caps.loc[ids].to_numpy(dtype=float)
        for f, s, b, m, c, cap in zip(ids, sb, bb, mb, cell, w):
            cell_rows.append((month, f, int(s), int(b), int(m), int(c), float(cap)))

        days = returns.index[day_months == month]
        R = returns.loc[days, ids].to_numpy(dtype=float)
        valid = np.isfinite(R)
        cell_of = {}
        for c in np.unique(cell):
            cols = np.nonzero(cell == c)[0]
            wm = np.where(valid[:, cols], w[cols], 0.0)
            denom = wm.sum(axis=1)
            num = np.where(valid[:, cols], R[:, cols], 0.0)
            with np.errstate(invalid="ignore"):
                series = (num * wm).sum(axis=1) / np.where(denom > 0, denom, np.nan)
            cell_of[c] = (cols, series)
        # day-level fallback along the size dimension for all-missing cells
        for c, (cols, series) in cell_of.items():
            dead = ~np.isfinite(series)
            if dead.any():
                s0, rem = divmod(c, bins * bins)
                for step in range(1, bins):
                    for s_new in (s0 - step, s0 + step):
                        if 0 <= s_new < bins:
                            alt = s_new * bins * bins + rem
                            if alt in cell_of:
                                alt_series = cell_of[alt][1]
                                fill = dead & np.isfinite(alt_series)
                                series[fill] = alt_series[fill]
                                dead = ~np.isfinite(series)
                    if not dead.any():
                        break
                if dead.any():
                    log.info("%s cell %d: no benchmark on %d days", month, c, int(dead.sum()))
            block = np.repeat(series[:, None], len(cols), axis=1)
            bench.loc[days, ids[cols]] = block

    cells = pd.DataFrame(
        cell_rows,
        columns=["month", "firm_id", "size_bin", "bm_bin", "mom_bin", "cell", "weight"],
    ).set_index(["month", "firm_id"])
    return BenchmarkPanel(bench_returns=bench, cells=cells, bins=bins)


class EventContext:
    """Compounded firm and benchmark return views for repeated CAR lookups."""

    def __init__(self, dataset: Dataset, bins: int = 5, panel: BenchmarkPanel | None = None):
        self.dataset = dataset
        self.panel = panel or assign_benchmarks(dataset, bins=bins)
        self.firm_cr = CompoundedReturns(dataset.market.returns)
        self.bench_cr = CompoundedReturns(self.panel.bench_returns)

    def car_path(self, firm_id: str, day0_idx: int, horizon: int) -> np.ndarray | None:
        """Running CAR over event days 0..horizon, or None if history is short."""
        fp = self.firm_cr.path(firm_id, day0_idx, day0_idx + horizon)
        bp = self.bench_cr.path(firm_id, day0_idx, day0_idx + horizon)
        if fp is None or bp is None:
            return None
        return fp - bp


def car(dataset: Dataset, firm_id: str, event_day, horizon: int, context: EventContext | None = None) -> float | None:
    """Abnormal buy-and-hold return over trading days 0..horizon from event_day."""
    ctx = context or EventContext(dataset)
    i0 = dataset.calendar.index_of(event_day)
    path = ctx.car_path(firm_id, i0, horizon)
    return None if path is None else float(path[-1])


@dataclass
class EventCurve:
    label: str
    car: np.ndarray        # mean CAR per event day 0..horizon
    tstats: np.ndarray
    n_events: int
    n_months: int


def prepare_events(
    dataset: Dataset,
    forecasts: pd.DataFrame,
    horizon: int = 252,
    bins: int = 5,
    context: EventContext | None = None,
) -> pd.DataFrame:
    """One row per usable event: forecast, event-day index, cap weight, CAR path.

    Events lacking a lagged cap or a complete firm/benchmark path over the
    horizon are dropped (counted in the log).
    """
    ctx = context or EventContext(dataset, bins=bins)
    cal = dataset.calendar
    joined = forecasts.merge(
        dataset.reports[["report_id", "day0_idx"]], on="report_id", how="inner"
    )
    rows = []
    dropped_cap = dropped_path = 0
    for rec in joined.itertuples(index=False):
        date0 = cal.day(rec.day0_idx)
        month = date0.to_period("M")
        caps = dataset.market.caps
        try:
            weight = float(caps.loc[month - 1, rec.firm_id])
        except KeyError:
            weight = float("nan")
        if not np.isfinite(weight) or weight <= 0:
            dropped_cap += 1
            continue
        path = ctx.car_path(rec.firm_id, rec.day0_idx, horizon)
        if path is None:
            dropped_path += 1
            continue
        rows.append(
            (rec.report_id, rec.firm_id, rec.day0_idx, date0, month, weight, rec.predicted_return, path)
        )
    if dropped_cap or dropped_path:
        log.info("events dropped: %d without lagged cap, %d with incomplete paths", dropped_cap, dropped_path)
    return pd.DataFrame(
        rows,
        columns=["report_id", "firm_id", "day0_idx", "date0", "month", "weight", "predicted_return", "path"],
    )


def assign_event_deciles(events: pd.DataFrame, min_day_count: int = 10) -> np.ndarray:
    """Decile per event from same-day sorting, monthly breakpoints on thin days."""
    from .portfolio import decile_of_rank, rank_with_tiebreak

    deciles = np.zeros(len(events), dtype=int)
    pos = {idx: k for k, idx in enumerate(events.index)}
    thin = []
    for _, idx in events.groupby("date0").groups.items():
        if len(idx) >= min_day_count:
            sub = events.loc[idx]
            ranks = rank_with_tiebreak(
                sub["predicted_return"].to_numpy(), sub["report_id"].to_numpy()
            )
            for i, d in zip(idx, decile_of_rank(ranks, len(idx))):
                deciles[pos[i]] = d
        else:
            thin.extend(idx)
    if thin:
        log.info("%d events on thin days use monthly breakpoints", len(thin))
        thin_set = set(thin)
        for _, idx in events.groupby("month").groups.items():
            month_vals = np.sort(events.loc[idx, "predicted_return"].to_numpy())
            n = len(month_vals)
            for i in idx:
                if i in thin_set:
                    pct = np.searchsorted(month_vals, events.at[i, "predicted_return"], side="right") / n
                    deciles[pos[i]] = min(10, max(1, math.ceil(10.0 * pct)))
    return deciles


def curves_by_group(
    events: pd.DataFrame, key: str, horizon: int, nw_lags: int = 12
) -> tuple[dict, dict]:
    """Value-weighted within month, equal-weighted across months, per group.

    Returns the curves and the per-group monthly mean paths used for them.
    """
    curves: dict[str, EventCurve] = {}
    monthly_means: dict[str, dict] = {}
    for label, sub in events.groupby(key):
        means = {}
        for month, msub in sub.groupby("month"):
            paths = np.stack(msub["path"].to_numpy())
            means[month] = np.average(paths, axis=0, weights=msub["weight"].to_numpy())
        monthly_means[label] = means
        stacked = np.stack([means[m] for m in sorted(means)])
        car_mean = stacked.mean(axis=0)
        tstats = np.full(horizon + 1, np.nan)
        if len(stacked) > 1:
            for d in range(horizon + 1):
                _, tstats[d] = nw_tstat_of_mean(stacked[:, d], nw_lags)
        curves[label] = EventCurve(
            label=str(label), car=car_mean, tstats=tstats, n_events=len(sub), n_months=len(means)
        )
    return curves, monthly_means


def event_decile_curves(
    dataset: Dataset,
    forecasts: pd.DataFrame,
    horizon: int = 252,
    bins: int = 5,
    min_day_count: int = 10,
    context: EventContext | None = None,
) -> dict[str, EventCurve]:
    """Mean CAR curves per forecast decile plus the high-minus-low spread.

    The spread curve is the pointwise difference of the top and bottom decile
    curves; its t-statistics come from the months where both exist.
    """
    events = prepare_events(dataset, forecasts, horizon=horizon, bins=bins, context=context)
    if events.empty:
        raise ValueError("no usable events")
    events = events.assign(decile=assign_event_deciles(events, min_day_count=min_day_count))
    events["decile_label"] = "d" + events["decile"].astype(str)
    curves, monthly = curves_by_group(events, "decile_label", horizon)
    if "d10" in curves and "d1" in curves:
        both = sorted(set(monthly["d10"]) & set(monthly["d1"]))
        spread = curves["d10"].car - curves["d1"].car
        tstats = np.full(horizon + 1, np.nan)
        if len(both) > 1:
            diff = np.stack([monthly["d10"][m] - monthly["d1"][m] for m in both])
            for d in range(horizon + 1):
                _, tstats[d] = nw_tstat_of_mean(diff[:, d], 12)
        curves["hl"] = EventCurve(
            label="hl", car=spread, tstats=tstats,
            n_events=curves["d10"].n_events + curves["d1"].n_events, n_months=len(both),
        )
    return curves
