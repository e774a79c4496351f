"""Hand-built micro input sets giving tests full control over edge cases."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from narralpha.formats import write_embeddings
from narralpha.ingest import IngestConfig


def month_days(year: int, month: int, n: int = 21) -> list[str]:
    return [f"{year:04d}-{month:02d}-{d:02d}" for d in range(1, n + 1)]


class TinyInputs:
    """Builder for a minimal but fully consistent input-file set."""

    def __init__(self, tmpdir: Path, n_months: int = 6, days_per_month: int = 21,
                 start_year: int = 2020, start_month: int = 1):
        self.dir = Path(tmpdir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.days: list[str] = []
        y, m = start_year, start_month
        for _ in range(n_months):
            self.days.extend(month_days(y, m, days_per_month))
            m += 1
            if m > 12:
                m, y = 1, y + 1
        self.months = sorted({d[:7] for d in self.days})
        self.reports: list[dict] = []
        self.market_rows: list[dict] = []
        self.embeddings: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self.labels = ["a", "b"]
        self.dim = 4
        self.numerics: list[dict] = []
        self.earnings: list[dict] = []
        self.chars: list[dict] = []
        self.factor_rows: list[dict] | None = None

    # -- content helpers ---------------------------------------------------
    def add_firm(self, firm_id: str, daily_ret: float | list = 0.0, cap: float = 100.0,
                 close: float = 10.0, last_day: int | None = None, logsize: float | None = None):
        rets = daily_ret if isinstance(daily_ret, (list, np.ndarray)) else [daily_ret] * len(self.days)
        n = len(self.days) if last_day is None else last_day
        for i in range(n):
            date = self.days[i]
            is_month_end = (i + 1 == len(self.days)) or self.days[i + 1][:7] != date[:7] if i + 1 < len(self.days) else True
            self.market_rows.append({
                "firm_id": firm_id, "date": date, "ret": rets[i],
                "mktcap": cap if is_month_end else "", "close": close,
            })
        for month in self.months:
            self.chars.append({
                "firm_id": firm_id, "month": month,
                "logsize": np.log(cap) if logsize is None else logsize,
                "bm": 0.5, "mom12": 0.0, "gprof": 0.3, "inv": 1.0, "ivol": 0.02,
            })

    def add_report(self, report_id: str, firm_id: str, date: str, weights=None, blocks=None,
                   analyst="A1", broker="B1", rec="", eps="", tp="",
                   n_pos=5, n_neg=2, n_sent=10):
        self.reports.append({
            "report_id": report_id, "firm_id": firm_id, "analyst_id": analyst,
            "broker_id": broker, "release_date": date, "recommendation": rec,
            "eps_forecast": eps, "target_price": tp,
            "n_pos": n_pos, "n_neg": n_neg, "n_sent": n_sent,
        })
        g = len(self.labels)
        if weights is None:
            weights = np.full(g, 1.0 / g)
        if blocks is None:
            blocks = np.zeros((g, self.dim), dtype=np.float32)
        self.embeddings[report_id] = (np.asarray(weights, float), np.asarray(blocks, np.float32))

    # -- write ----------------------------------------------------------------
    def write(self) -> IngestConfig:
        pd.DataFrame({"date": self.days}).to_csv(self.dir / "calendar.csv", index=False)
        pd.DataFrame(self.reports).to_csv(self.dir / "reports.csv", index=False)
        pd.DataFrame(self.market_rows).to_csv(self.dir / "market.csv", index=False)
        pd.DataFrame(self.chars).to_csv(self.dir / "chars.csv", index=False)
        if self.factor_rows is None:
            self.factor_rows = [
                {"month": m, "rf": 0.0, "mktrf": 0.0, "smb": 0.0, "hml": 0.0,
                 "rmw": 0.0, "cma": 0.0, "mom": 0.0}
                for m in self.months
            ]
        pd.DataFrame(self.factor_rows).to_csv(self.dir / "factors.csv", index=False)
        pd.DataFrame(
            self.numerics or [],
            columns=["analyst_id", "firm_id", "date", "recommendation", "eps_forecast", "target_price"],
        ).to_csv(self.dir / "numerics.csv", index=False)
        pd.DataFrame(
            self.earnings or [],
            columns=["firm_id", "announce_date", "quarter_end", "actual_eps", "consensus_eps"],
        ).to_csv(self.dir / "earnings.csv", index=False)
        rids = list(self.embeddings)
        weights = np.stack([self.embeddings[r][0] for r in rids]) if rids else np.empty((0, len(self.labels)))
        blocks = (
            np.stack([self.embeddings[r][1] for r in rids])
            if rids else np.empty((0, len(self.labels), self.dim), dtype=np.float32)
        )
        write_embeddings(self.dir / "embeddings.bin", self.labels, rids, weights, blocks)
        return IngestConfig(
            reports=self.dir / "reports.csv",
            embeddings=self.dir / "embeddings.bin",
            market=self.dir / "market.csv",
            chars=self.dir / "chars.csv",
            factors=self.dir / "factors.csv",
            calendar=self.dir / "calendar.csv",
            numerics=self.dir / "numerics.csv",
            earnings=self.dir / "earnings.csv",
        )
