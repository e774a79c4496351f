"""In-memory dataset: joined reports, embeddings, market panel, factors.

Everything here is immutable after loading; downstream stages only read.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .calendar import TradingCalendar


@dataclass(frozen=True)
class EmbeddingStore:
    """Per-report block embeddings: weights (n, G) and blocks (n, G, D).

    The report-level vector is derived as the weight-sum of blocks and is
    never stored. ``index`` maps report_id to row position.
    """

    labels: tuple[str, ...]
    report_ids: np.ndarray          # object array of str
    weights: np.ndarray             # float64 (n, G)
    blocks: np.ndarray              # float32 (n, G, D)
    index: dict[str, int] = field(repr=False, default_factory=dict)

    @property
    def dim(self) -> int:
        return self.blocks.shape[2]

    @property
    def n_groups(self) -> int:
        return len(self.labels)

    def full_vectors(self) -> np.ndarray:
        """(n, D) weight-combined vectors, float64."""
        return np.einsum("ng,ngd->nd", self.weights, self.blocks.astype(np.float64))

    def row(self, report_id: str) -> int:
        return self.index[report_id]

    def coalition_vectors(self, mask_labels: set[str]) -> np.ndarray:
        """(n, D) vectors keeping only the listed groups; others are zeroed."""
        keep = np.array([lab in mask_labels for lab in self.labels], dtype=bool)
        w = np.where(keep[None, :], self.weights, 0.0)
        return np.einsum("ng,ngd->nd", w, self.blocks.astype(np.float64))


class MarketData:
    """Daily returns plus monthly caps/characteristics in aligned wide frames."""

    def __init__(
        self,
        returns: pd.DataFrame,
        caps: pd.DataFrame,
        chars: pd.DataFrame,
        close: pd.DataFrame | None = None,
    ):
        self.returns = returns            # trading day x firm_id, daily simple returns
        self.caps = caps                  # month (Period) x firm_id, month-end market cap
        self.chars = chars                # (month, firm_id) MultiIndex -> characteristic columns
        self.close = close                # trading day x firm_id, daily close (optional)
        self._monthly_returns: pd.DataFrame | None = None

    @property
    def firms(self) -> pd.Index:
        return self.returns.columns

    def monthly_returns(self) -> pd.DataFrame:
        """Month x firm compounded simple returns from daily data (cached)."""
        if self._monthly_returns is None:
            grouped = (1.0 + self.returns).groupby(self.returns.index.to_period("M")).prod(min_count=1)
            self._monthly_returns = grouped - 1.0
        return self._monthly_returns

    def lagged_caps(self, month: pd.Period) -> pd.Series:
        """Market caps at the end of the month before ``month`` (NaN-dropped)."""
        prior = month - 1
        if prior not in self.caps.index:
            return pd.Series(dtype=float)
        return self.caps.loc[prior].dropna()


@dataclass(frozen=True)
class NumericHistory:
    """Analyst numeric records and earnings events for revision/SUE measures.

    Lookups are pre-grouped lazily so per-report scans stay O(group size).
    """

    records: pd.DataFrame             # analyst_id, firm_id, date, recommendation, eps_forecast, target_price
    earnings: pd.DataFrame            # firm_id, announce_date, quarter_end, actual_eps, consensus_eps
    _caches: dict = field(default_factory=dict, repr=False, compare=False)

    def _group(self, name: str, frame: pd.DataFrame, keys) -> dict:
        cache = self._caches.get(name)
        if cache is None:
            cache = {} if frame.empty else dict(tuple(frame.groupby(keys, sort=False)))
            self._caches[name] = cache
        return cache

    def records_for(self, analyst_id: str, firm_id: str) -> pd.DataFrame | None:
        return self._group("by_analyst_firm", self.records, ["analyst_id", "firm_id"]).get(
            (analyst_id, firm_id)
        )

    def records_for_firm(self, firm_id: str) -> pd.DataFrame | None:
        return self._group("records_by_firm", self.records, "firm_id").get(firm_id)

    def earnings_for(self, firm_id: str) -> pd.DataFrame | None:
        return self._group("earnings_by_firm", self.earnings, "firm_id").get(firm_id)


@dataclass(frozen=True)
class Dataset:
    """Joined inputs keyed by report, firm, and month."""

    reports: pd.DataFrame             # accepted report records, indexed by report_id
    embeddings: EmbeddingStore
    market: MarketData
    factors: pd.DataFrame             # month (Period) index; rf plus factor columns
    calendar: TradingCalendar
    rejects: pd.DataFrame             # report_id, reason
    numerics: NumericHistory | None = None

    def content_hash(self) -> str:
        """Deterministic digest of the joined logical content."""
        h = hashlib.sha256()
        h.update(self.reports.sort_index().to_csv().encode())
        h.update(np.ascontiguousarray(self.embeddings.weights).tobytes())
        h.update(np.ascontiguousarray(self.embeddings.blocks).tobytes())
        h.update("|".join(self.embeddings.labels).encode())
        h.update(self.market.returns.to_csv().encode())
        h.update(self.market.caps.to_csv().encode())
        h.update(self.market.chars.to_csv().encode())
        h.update(self.factors.to_csv().encode())
        h.update(self.calendar.days.astype(str).str.cat(sep=",").encode())
        return h.hexdigest()
