"""Window products of (1+r) over trading-day indices, with gap accounting."""

from __future__ import annotations

import numpy as np
import pandas as pd


class CompoundedReturns:
    """Cumulative-product view of a daily return panel (days x firms).

    Missing days are tracked so window products can either be refused
    (strict) or truncated at the first gap (compound-through-available).
    """

    def __init__(self, returns: pd.DataFrame):
        arr = returns.to_numpy(dtype=float)
        self._isnan = np.isnan(arr)
        filled = np.where(self._isnan, 0.0, arr)
        self._cp = np.cumprod(1.0 + filled, axis=0)
        self._nan_cum = np.cumsum(self._isnan, axis=0)
        self._col = {f: j for j, f in enumerate(returns.columns)}
        self.n_days = arr.shape[0]

    def has_firm(self, firm) -> bool:
        return firm in self._col

    def _prod(self, j: int, i0: int, i1: int) -> float:
        hi = self._cp[i1, j]
        lo = self._cp[i0 - 1, j] if i0 > 0 else 1.0
        return hi / lo

    def gaps(self, firm, i0: int, i1: int) -> int:
        j = self._col[firm]
        hi = self._nan_cum[i1, j]
        lo = self._nan_cum[i0 - 1, j] if i0 > 0 else 0
        return int(hi - lo)

    def window_product(self, firm, i0: int, i1: int, through_gaps: bool = False) -> float | None:
        """Product of (1+r) over day indices [i0, i1], or None.

        With ``through_gaps`` the product runs up to the day before the first
        missing day inside the window instead of failing.
        """
        if firm not in self._col:
            raise KeyError(f"unknown firm {firm!r}")
        if i1 >= self.n_days or i0 > i1 or i0 < 0:
            return None
        j = self._col[firm]
        if self.gaps(firm, i0, i1) == 0:
            return self._prod(j, i0, i1)
        if not through_gaps:
            return None
        rel = int(np.argmax(self._isnan[i0 : i1 + 1, j]))
        if rel == 0:
            return 1.0
        return self._prod(j, i0, i0 + rel - 1)

    def path(self, firm, i0: int, i1: int) -> np.ndarray | None:
        """Running products of (1+r) over [i0, i1]; None if any day is missing."""
        if firm not in self._col:
            raise KeyError(f"unknown firm {firm!r}")
        if i1 >= self.n_days or i0 > i1 or i0 < 0:
            return None
        j = self._col[firm]
        if self.gaps(firm, i0, i1) > 0:
            return None
        base = self._cp[i0 - 1, j] if i0 > 0 else 1.0
        return self._cp[i0 : i1 + 1, j] / base
