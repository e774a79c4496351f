"""Load, validate, and join the input files into an immutable Dataset.

File schemas (CSV headers are mandatory, empty field = missing):

* ``reports.csv``: report_id, firm_id, analyst_id, broker_id, release_date,
  recommendation, eps_forecast, target_price, n_pos, n_neg, n_sent
  (optional extra columns: headline_tone, body_tone)
* ``market.csv``: firm_id, date, ret, mktcap (optional: close)
* ``chars.csv``: firm_id, month, logsize, bm, mom12, gprof, inv, ivol
* ``factors.csv``: month, rf, <factor columns>
* ``calendar.csv``: date (one trading day per row)
* ``numerics.csv``: analyst_id, firm_id, date, recommendation, eps_forecast,
  target_price
* ``earnings.csv``: firm_id, announce_date, quarter_end, actual_eps,
  consensus_eps

Validation failures are fatal and name the file and line; reports that fail
a join are collected in the rejects table, never silently dropped.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .calendar import TradingCalendar
from .dataset import Dataset, EmbeddingStore, MarketData, NumericHistory
from .errors import SchemaError, UserError
from .formats import read_embeddings

log = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "report_id", "firm_id", "analyst_id", "broker_id", "release_date",
    "recommendation", "eps_forecast", "target_price", "n_pos", "n_neg", "n_sent",
]
OPTIONAL_REPORT_COLUMNS = ["headline_tone", "body_tone"]
CHAR_COLUMNS = ["logsize", "bm", "mom12", "gprof", "inv", "ivol"]


@dataclass
class IngestConfig:
    """Paths to input files plus join options."""

    reports: Path
    embeddings: Path
    market: Path
    chars: Path
    factors: Path
    calendar: Path
    numerics: Path | None = None
    earnings: Path | None = None
    match_window_days: int = 2
    match_window_unit: str = "trading"   # or "calendar"
    sample_start: pd.Timestamp | None = None
    sample_end: pd.Timestamp | None = None

    @classmethod
    def from_file(cls, path) -> "IngestConfig":
        raw = load_config_file(path)
        inputs = raw.get("inputs", raw)
        base = Path(path).resolve().parent

        def resolve(key, required=True):
            val = inputs.get(key)
            if val is None:
                if required:
                    raise UserError(f"config {path}: missing inputs.{key}")
                return None
            p = Path(val)
            return p if p.is_absolute() else base / p

        opts = raw.get("ingest", {})
        return cls(
            reports=resolve("reports"),
            embeddings=resolve("embeddings"),
            market=resolve("market"),
            chars=resolve("chars"),
            factors=resolve("factors"),
            calendar=resolve("calendar"),
            numerics=resolve("numerics", required=False),
            earnings=resolve("earnings", required=False),
            match_window_days=int(opts.get("match_window_days", 2)),
            match_window_unit=str(opts.get("match_window_unit", "trading")),
            sample_start=pd.Timestamp(opts["sample_start"]) if "sample_start" in opts else None,
            sample_end=pd.Timestamp(opts["sample_end"]) if "sample_end" in opts else None,
        )


def load_config_file(path) -> dict:
    """Parse a TOML or JSON config file into a dict."""
    path = Path(path)
    if not path.exists():
        raise UserError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return json.loads(text)
    try:
        import tomllib  # py311+
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(text)


def _read_csv(path, required: list[str], parse_dates: list[str] = ()) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise UserError(f"input file not found: {path}")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except Exception as exc:  # noqa: BLE001 - surface parser message with filename
        raise SchemaError(f"{path}: {exc}") from exc
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing} (header line 1)")
    df = df.replace({"": None})
    for col in parse_dates:
        parsed = pd.to_datetime(df[col], format="ISO8601", errors="coerce")
        bad = parsed.isna() & df[col].notna()
        if bad.any():
            line = int(bad.idxmax()) + 2  # +1 header, +1 zero-based
            raise SchemaError(f"{path}:{line}: unparseable date {df[col][bad.idxmax()]!r} in {col}")
        df[col] = parsed
    return df


def _numeric(df: pd.DataFrame, path, cols: list[str]) -> pd.DataFrame:
    for col in cols:
        vals = pd.to_numeric(df[col], errors="coerce")
        bad = vals.isna() & df[col].notna()
        if bad.any():
            line = int(bad.idxmax()) + 2
            raise SchemaError(f"{path}:{line}: non-numeric value {df[col][bad.idxmax()]!r} in {col}")
        df[col] = vals
    return df


def load_calendar(path) -> TradingCalendar:
    df = _read_csv(path, ["date"], parse_dates=["date"])
    days = pd.DatetimeIndex(df["date"])
    if not days.is_monotonic_increasing or days.has_duplicates:
        raise SchemaError(f"{path}: trading days must be strictly increasing")
    return TradingCalendar(days)


def load_reports(path) -> pd.DataFrame:
    df = _read_csv(path, REPORT_COLUMNS, parse_dates=["release_date"])
    numeric_cols = ["recommendation", "eps_forecast", "target_price", "n_pos", "n_neg", "n_sent"]
    numeric_cols += [c for c in OPTIONAL_REPORT_COLUMNS if c in df.columns]
    df = _numeric(df, path, numeric_cols)
    dupes = df["report_id"][df["report_id"].duplicated()]
    if not dupes.empty:
        raise SchemaError(f"{path}: duplicate report_id {dupes.iloc[0]!r}")
    counts = df[["n_pos", "n_neg", "n_sent"]]
    if (counts.fillna(0) < 0).any().any():
        bad = (counts.fillna(0) < 0).any(axis=1)
        raise SchemaError(f"{path}:{int(bad.idxmax()) + 2}: negative sentence count")
    inconsistent = (df["n_pos"].fillna(0) + df["n_neg"].fillna(0)) > df["n_sent"].fillna(np.inf)
    if inconsistent.any():
        line = int(inconsistent.idxmax()) + 2
        raise SchemaError(f"{path}:{line}: n_pos + n_neg exceeds n_sent")
    df = df.set_index("report_id", drop=False)
    df.index.name = None
    return df


def load_market(path, calendar: TradingCalendar) -> MarketData:
    required = ["firm_id", "date", "ret", "mktcap"]
    df = _read_csv(path, required, parse_dates=["date"])
    cols = ["ret", "mktcap"] + (["close"] if "close" in df.columns else [])
    df = _numeric(df, path, cols)
    if (df["ret"].dropna() <= -1).any():
        line = int((df["ret"] <= -1).idxmax()) + 2
        raise SchemaError(f"{path}:{line}: return not > -1")
    if (df["mktcap"].dropna() <= 0).any():
        line = int((df["mktcap"] <= 0).idxmax()) + 2
        raise SchemaError(f"{path}:{line}: market cap must be positive where present")
    returns = df.pivot_table(index="date", columns="firm_id", values="ret", aggfunc="first")
    returns = returns.reindex(calendar.days)
    caps_rows = df.dropna(subset=["mktcap"])
    caps = caps_rows.pivot_table(index="date", columns="firm_id", values="mktcap", aggfunc="last")
    caps.index = caps.index.to_period("M")
    caps = caps.groupby(level=0).last()
    close = None
    if "close" in df.columns:
        close = df.pivot_table(index="date", columns="firm_id", values="close", aggfunc="first")
        close = close.reindex(calendar.days)
    return MarketData(returns=returns, caps=caps, chars=pd.DataFrame(), close=close)


def load_chars(path) -> pd.DataFrame:
    df = _read_csv(path, ["firm_id", "month"] + CHAR_COLUMNS)
    df = _numeric(df, path, CHAR_COLUMNS)
    df["month"] = pd.PeriodIndex(df["month"], freq="M")
    return df.set_index(["month", "firm_id"]).sort_index()


def load_factors(path) -> pd.DataFrame:
    df = _read_csv(path, ["month", "rf"])
    factor_cols = [c for c in df.columns if c != "month"]
    df = _numeric(df, path, factor_cols)
    df["month"] = pd.PeriodIndex(df["month"], freq="M")
    if df["month"].duplicated().any():
        raise SchemaError(f"{path}: duplicate month rows")
    df = df.set_index("month").sort_index()
    gaps = pd.period_range(df.index[0], df.index[-1], freq="M").difference(df.index)
    if len(gaps):
        raise SchemaError(f"{path}: months not contiguous, first gap {gaps[0]}")
    return df


def load_numerics(path) -> pd.DataFrame:
    df = _read_csv(
        path,
        ["analyst_id", "firm_id", "date", "recommendation", "eps_forecast", "target_price"],
        parse_dates=["date"],
    )
    df = _numeric(df, path, ["recommendation", "eps_forecast", "target_price"])
    return df.sort_values(["analyst_id", "firm_id", "date"]).reset_index(drop=True)


def load_earnings(path) -> pd.DataFrame:
    df = _read_csv(
        path,
        ["firm_id", "announce_date", "quarter_end", "actual_eps", "consensus_eps"],
        parse_dates=["announce_date", "quarter_end"],
    )
    df = _numeric(df, path, ["actual_eps", "consensus_eps"])
    return df.sort_values(["firm_id", "announce_date"]).reset_index(drop=True)


def load_embedding_store(path) -> EmbeddingStore:
    labels, report_ids, weights, blocks = read_embeddings(path)
    if not np.isfinite(weights).all() or not np.isfinite(blocks).all():
        raise SchemaError(f"{path}: non-finite embedding values")
    sums = weights.sum(axis=1)
    off = np.abs(sums - 1.0) > 1e-9
    if off.any():
        rid = report_ids[int(np.argmax(off))]
        raise SchemaError(f"{path}: block weights for report {rid!r} sum to {sums[np.argmax(off)]:.12f}")
    if (weights < 0).any():
        raise SchemaError(f"{path}: negative block weight")
    seen: dict[str, int] = {}
    for i, rid in enumerate(report_ids):
        if rid in seen:
            raise SchemaError(f"{path}: duplicate report_id {rid!r}")
        seen[rid] = i
    return EmbeddingStore(
        labels=tuple(labels),
        report_ids=np.array(report_ids, dtype=object),
        weights=weights,
        blocks=blocks,
        index=seen,
    )


def load_dataset(config) -> Dataset:
    """Load every input named in the config and join into a Dataset.

    ``config`` is an IngestConfig or a path to a TOML/JSON file. Reports that
    cannot be joined are listed in ``Dataset.rejects`` with a reason.
    """
    if not isinstance(config, IngestConfig):
        config = IngestConfig.from_file(config)
    calendar = load_calendar(config.calendar)
    reports = load_reports(config.reports)
    store = load_embedding_store(config.embeddings)
    market = load_market(config.market, calendar)
    market.chars = load_chars(config.chars)
    factors = load_factors(config.factors)
    numerics = None
    if config.numerics is not None or config.earnings is not None:
        numerics = NumericHistory(
            records=load_numerics(config.numerics) if config.numerics else pd.DataFrame(),
            earnings=load_earnings(config.earnings) if config.earnings else pd.DataFrame(),
        )

    start = config.sample_start or calendar.first
    end = config.sample_end or calendar.last
    covered = set(market.returns.columns[market.returns.notna().any(axis=0)])

    reasons = {}
    day0_idx = {}
    for rid, row in reports.iterrows():
        if rid not in store.index:
            reasons[rid] = "no embedding"
            continue
        if row.firm_id not in covered:
            reasons[rid] = "no market data"
            continue
        if not (start <= row.release_date <= end):
            reasons[rid] = "outside sample range"
            continue
        i = calendar.next_on_or_after(row.release_date)
        if i is None:
            reasons[rid] = "no release trading day"
            continue
        day0_idx[rid] = i

    accepted = reports.loc[[r for r in reports.index if r not in reasons]].copy()
    accepted["day0_idx"] = [day0_idx[r] for r in accepted.index]
    accepted["release_month"] = accepted["release_date"].dt.to_period("M")
    rejects = pd.DataFrame(
        {"report_id": list(reasons), "reason": [reasons[k] for k in reasons]}
    )
    if len(rejects):
        log.warning("rejected %d of %d reports", len(rejects), len(reports))
    return Dataset(
        reports=accepted,
        embeddings=store,
        market=market,
        factors=factors,
        calendar=calendar,
        rejects=rejects,
        numerics=numerics,
    )


@dataclass(frozen=True)
class MatchedNumerics:
    """Numeric record attached to a report, or missing."""

    date: pd.Timestamp | None = None
    recommendation: float | None = None
    eps_forecast: float | None = None
    target_price: float | None = None

    @property
    def missing(self) -> bool:
        return self.date is None


def match_numeric_records(
    report,
    history: pd.DataFrame,
    window_days: int = 2,
    calendar: TradingCalendar | None = None,
    unit: str = "trading",
    pre_filtered: bool = False,
) -> MatchedNumerics:
    """Attach the numeric record dated within +-window_days of the release.

    Among several candidates the closest in days wins, ties broken toward the
    earlier date. ``unit`` selects trading-day (default, needs a calendar) or
    calendar-day distances. Callers holding a frame already restricted to the
    analyst/firm pair can pass ``pre_filtered`` to skip the scan.
    """
    if window_days < 0:
        raise ValueError("window_days must be >= 0")
    if pre_filtered:
        rows = history
    else:
        rows = history[
            (history["analyst_id"] == report.analyst_id) & (history["firm_id"] == report.firm_id)
        ]
    if len(rows) == 0:
        return MatchedNumerics()
    dates = rows["date"].to_numpy()
    if unit == "trading":
        if calendar is None:
            raise ValueError("trading-day matching needs a calendar")
        ref = calendar.next_on_or_after(report.release_date)
        if ref is None:
            return MatchedNumerics()
        dist = np.searchsorted(calendar.days.values, dates).astype(int) - ref
    else:
        dist = (dates - pd.Timestamp(report.release_date).to_datetime64()) // np.timedelta64(1, "D")
    absd = np.abs(dist)
    in_window = absd <= window_days
    if not in_window.any():
        return MatchedNumerics()
    cand = np.nonzero(in_window)[0]
    order = np.lexsort((dates[cand].astype("int64"), absd[cand]))
    i = int(cand[order[0]])
    return MatchedNumerics(
        date=pd.Timestamp(dates[i]),
        recommendation=rows["recommendation"].to_numpy()[i],
        eps_forecast=rows["eps_forecast"].to_numpy()[i],
        target_price=rows["target_price"].to_numpy()[i],
    )


def write_rejects(dataset: Dataset, path) -> None:
    dataset.rejects.to_csv(path, index=False)
