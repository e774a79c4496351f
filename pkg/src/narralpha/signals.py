"""Derived per-report measures: tone, numeric revisions, SUE, decile profiles.

Revision measures return missing (None/NaN), never zero, when no prior
record exists; zero is a meaningful revision.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .compound import CompoundedReturns
from .dataset import Dataset
from .eventstudy import EventContext, nw_tstat_of_mean
from .ingest import match_numeric_records

log = logging.getLogger(__name__)

PROFILE_COLUMNS = ["predicted", "realized", "car01", "sue", "rec_rev", "ef_rev", "tp_rev"]


def tone(n_pos: float, n_neg: float, n_sent: float) -> float | None:
    """Net sentence sentiment (pos - neg) / total; None when the report is empty."""
    if n_sent is None or not np.isfinite(n_sent) or n_sent <= 0:
        return None
    return (n_pos - n_neg) / n_sent


@dataclass(frozen=True)
class Revisions:
    rec_rev: float | None = None
    ef_rev: float | None = None
    tp_rev: float | None = None
    reason: str | None = None


def _price_at_or_before(dataset: Dataset, firm_id: str, day_idx: int) -> float | None:
    close = dataset.market.close
    if close is None or firm_id not in close.columns:
        return None
    col = close[firm_id].to_numpy()
    for j in range(min(day_idx, len(col) - 1), -1, -1):
        if np.isfinite(col[j]):
            return float(col[j])
    return None


def price_lagged(dataset: Dataset, firm_id: str, day0_idx: int, lag_days: int = 50) -> float | None:
    """Close ``lag_days`` trading days before the event day, walking back over gaps."""
    idx = day0_idx - lag_days
    if idx < 0:
        return None
    return _price_at_or_before(dataset, firm_id, idx)


def revisions(report, dataset: Dataset, window_days: int = 2, unit: str = "trading") -> Revisions:
    """Differences vs the same analyst's most recent prior record for the firm.

    EPS and target-price differences are scaled by the close 50 trading days
    before the release. Missing prior records or prices leave the affected
    measures absent with a reason.
    """
    if dataset.numerics is None or dataset.numerics.records.empty:
        return Revisions(reason="no numeric history")
    history = dataset.numerics.records_for(report.analyst_id, report.firm_id)
    if history is None:
        return Revisions(reason="no matched record")
    current = match_numeric_records(
        report, history, window_days=window_days, calendar=dataset.calendar,
        unit=unit, pre_filtered=True,
    )
    if current.missing:
        return Revisions(reason="no matched record")
    dates = history["date"].to_numpy()  # sorted at load
    j = int(np.searchsorted(dates, current.date.to_datetime64(), side="left")) - 1
    if j < 0:
        return Revisions(reason="no prior record")

    def diff(cur, prev):
        if cur is None or prev is None or not (np.isfinite(cur) and np.isfinite(prev)):
            return None
        return float(cur - prev)

    rec_rev = diff(current.recommendation, history["recommendation"].to_numpy()[j])
    ef_raw = diff(current.eps_forecast, history["eps_forecast"].to_numpy()[j])
    tp_raw = diff(current.target_price, history["target_price"].to_numpy()[j])
    ef_rev = tp_rev = None
    reason = None
    if ef_raw is not None or tp_raw is not None:
        price = price_lagged(dataset, report.firm_id, report.day0_idx, 50)
        if price is None:
            reason = "no 50-day prior price"
        else:
            ef_rev = ef_raw / price if ef_raw is not None else None
            tp_rev = tp_raw / price if tp_raw is not None else None
    return Revisions(rec_rev=rec_rev, ef_rev=ef_rev, tp_rev=tp_rev, reason=reason)


def sue(
    dataset: Dataset,
    firm_id: str,
    report_date,
    prefer_supplied: bool = True,
    consensus_window_days: int = 90,
) -> float | None:
    """Earnings surprise of the latest announcement before the report.

    Consensus is the supplied column when present (and preferred), otherwise
    the median of each analyst's latest EPS forecast in the window before the
    announcement. Scaled by the close at the fiscal quarter end.
    """
    if dataset.numerics is None or dataset.numerics.earnings.empty:
        return None
    ev = dataset.numerics.earnings_for(firm_id)
    if ev is None:
        return None
    announce = ev["announce_date"].to_numpy()  # sorted at load
    j = int(np.searchsorted(announce, pd.Timestamp(report_date).to_datetime64(), side="left")) - 1
    if j < 0:
        return None
    event = ev.iloc[j]
    consensus = event["consensus_eps"] if prefer_supplied else None
    if consensus is None or not np.isfinite(consensus):
        recs = dataset.numerics.records_for_firm(firm_id)
        if recs is None:
            return None
        window = recs[
            (recs["date"] < event["announce_date"])
            & (recs["date"] >= event["announce_date"] - pd.Timedelta(days=consensus_window_days))
        ].dropna(subset=["eps_forecast"])
        if window.empty:
            return None
        latest = window.sort_values("date", kind="stable").groupby("analyst_id").tail(1)
        consensus = float(latest["eps_forecast"].median())
    qend_idx = dataset.calendar.last_on_or_before(event["quarter_end"])
    if qend_idx is None:
        return None
    price = _price_at_or_before(dataset, firm_id, qend_idx)
    if price is None or price <= 0:
        return None
    return (float(event["actual_eps"]) - float(consensus)) / price


def report_signals(
    dataset: Dataset,
    window_days: int = 2,
    unit: str = "trading",
    include_car01: bool = True,
    context: EventContext | None = None,
    bins: int = 5,
    prefer_supplied_consensus: bool = True,
) -> pd.DataFrame:
    """Per-report measure table: tone, revisions, SUE, and two-day abnormal return."""
    ctx = None
    if include_car01:
        ctx = context or EventContext(dataset, bins=bins)
    rows = []
    for rep in dataset.reports.itertuples(index=False):
        t = tone(rep.n_pos, rep.n_neg, rep.n_sent)
        rev = revisions(rep, dataset, window_days=window_days, unit=unit)
        s = sue(dataset, rep.firm_id, rep.release_date, prefer_supplied=prefer_supplied_consensus)
        car01 = None
        if ctx is not None:
            path = ctx.car_path(rep.firm_id, rep.day0_idx, 1)
            car01 = None if path is None else float(path[-1])
        rows.append(
            {
                "report_id": rep.report_id,
                "firm_id": rep.firm_id,
                "release_date": rep.release_date,
                "tone": t,
                "rec_rev": rev.rec_rev,
                "ef_rev": rev.ef_rev,
                "tp_rev": rev.tp_rev,
                "sue": s,
                "car01": car01,
            }
        )
    return pd.DataFrame(rows)


def decile_profile(
    dataset: Dataset,
    forecasts: pd.DataFrame,
    signals: pd.DataFrame,
    horizon_months: int = 12,
    days_per_month: int = 21,
    nw_lags: int = 12,
) -> pd.DataFrame:
    """Per-decile means of forecast, realized return, and report measures.

    Reports are sorted into deciles within each release month; columns are
    averaged per month per decile and then across months. The ``hl`` row is
    exactly the decile-10 mean minus the decile-1 mean, with NW t-stats from
    the monthly spread series.
    """
    from .portfolio import decile_of_rank, rank_with_tiebreak

    cr = CompoundedReturns(dataset.market.returns)
    merged = forecasts.merge(signals.drop(columns=["firm_id", "release_date"]), on="report_id")
    merged = merged.merge(dataset.reports[["report_id", "day0_idx"]], on="report_id")
    realized = np.full(len(merged), np.nan)
    for k, rec in enumerate(merged.itertuples(index=False)):
        prod = cr.window_product(
            rec.firm_id, rec.day0_idx + 1, rec.day0_idx + horizon_months * days_per_month
        )
        if prod is not None:
            realized[k] = prod - 1.0
    merged = merged.assign(
        realized=realized,
        predicted=merged["predicted_return"],
        month=pd.PeriodIndex(merged["release_date"].dt.to_period("M")),
    )

    deciles = np.zeros(len(merged), dtype=int)
    for _, idx in merged.groupby("month").groups.items():
        sub = merged.loc[idx]
        ranks = rank_with_tiebreak(sub["predicted"].to_numpy(), sub["report_id"].to_numpy())
        deciles[merged.index.get_indexer(idx)] = decile_of_rank(ranks, len(idx))
    merged = merged.assign(decile=deciles)

    monthly = merged.groupby(["month", "decile"])[PROFILE_COLUMNS].mean()
    profile = monthly.groupby(level="decile").mean()
    profile = profile.reindex(range(1, 11))

    hl = profile.loc[10] - profile.loc[1]
    tstats = {}
    for col in PROFILE_COLUMNS:
        wide = monthly[col].unstack("decile")
        if 10 in wide.columns and 1 in wide.columns:
            spread = (wide[10] - wide[1]).dropna()
            if len(spread) > 1:
                _, tval = nw_tstat_of_mean(spread.to_numpy(), nw_lags)
                tstats[col] = tval
        tstats.setdefault(col, float("nan"))
    out = profile.copy()
    out.loc["hl"] = hl
    out.loc["hl_t"] = pd.Series(tstats)
    return out


SENTIMENT_KINDS = ("car01", "rec_rev", "headline_tone", "body_tone")


def sentiment_signal(
    dataset: Dataset,
    kind: str,
    signals: pd.DataFrame | None = None,
    context: EventContext | None = None,
    bins: int = 5,
) -> pd.DataFrame:
    """Per-report measure series shaped like forecasts for the portfolio engine.

    Feeding the output through the standard 12-month lookback signal builder
    reproduces the trailing-average sentiment sorts.
    """
    if kind not in SENTIMENT_KINDS:
        raise ValueError(f"kind must be one of {SENTIMENT_KINDS}")
    rep = dataset.reports
    if kind in ("car01", "rec_rev"):
        if signals is None:
            signals = report_signals(dataset, include_car01=(kind == "car01"), context=context, bins=bins)
        base = signals[["report_id", "firm_id", "release_date", kind]].rename(
            columns={kind: "predicted_return"}
        )
    elif kind == "headline_tone":
        if "headline_tone" not in rep.columns:
            raise ValueError("reports carry no headline_tone column")
        base = rep[["report_id", "firm_id", "release_date", "headline_tone"]].rename(
            columns={"headline_tone": "predicted_return"}
        )
    else:  # body_tone
        if "body_tone" in rep.columns:
            base = rep[["report_id", "firm_id", "release_date", "body_tone"]].rename(
                columns={"body_tone": "predicted_return"}
            )
        else:
            vals = [tone(r.n_pos, r.n_neg, r.n_sent) for r in rep.itertuples(index=False)]
            base = rep[["report_id", "firm_id", "release_date"]].assign(predicted_return=vals)
    base = base.dropna(subset=["predicted_return"]).reset_index(drop=True)
    return base
