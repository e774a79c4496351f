"""Trading-day calendar supplied as data, not computed from exchange rules."""

from __future__ import annotations

import numpy as np
import pandas as pd


class TradingCalendar:
    """Strictly increasing sequence of trading days with O(log n) lookups."""

    def __init__(self, days: pd.DatetimeIndex):
        days = pd.DatetimeIndex(days).sort_values()
        if days.has_duplicates:
            raise ValueError("calendar contains duplicate dates")
        self.days = days
        self._values = days.values

    def __len__(self) -> int:
        return len(self.days)

    @property
    def first(self) -> pd.Timestamp:
        return self.days[0]

    @property
    def last(self) -> pd.Timestamp:
        return self.days[-1]

    def index_of(self, date) -> int:
        """Exact position of a trading day; raises if not a trading day."""
        ts = pd.Timestamp(date)
        i = int(np.searchsorted(self._values, ts.to_datetime64()))
        if i >= len(self.days) or self.days[i] != ts:
            raise KeyError(f"{ts.date()} is not a trading day")
        return i

    def next_on_or_after(self, date) -> int | None:
        """Index of the first trading day at or after ``date``; None past the end."""
        ts = pd.Timestamp(date)
        i = int(np.searchsorted(self._values, ts.to_datetime64()))
        return i if i < len(self.days) else None

    def last_on_or_before(self, date) -> int | None:
        """Index of the last trading day at or before ``date``; None before the start."""
        ts = pd.Timestamp(date)
        i = int(np.searchsorted(self._values, ts.to_datetime64(), side="right")) - 1
        return i if i >= 0 else None

    def day(self, i: int) -> pd.Timestamp:
        return self.days[i]

    def month_of(self, i: int) -> pd.Period:
        return self.days[i].to_period("M")

    def months(self) -> pd.PeriodIndex:
        """All calendar months covered, in order."""
        return pd.period_range(self.days[0].to_period("M"), self.days[-1].to_period("M"), freq="M")
