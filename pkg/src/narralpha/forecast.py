"""Expanding-window ridge regression from report embeddings to return forecasts.

The model is refit once per out-of-sample month on the training rows admitted
by the label policy, with the penalty chosen by time-blocked cross-validation,
and then scores every report released in that month.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .compound import CompoundedReturns
from .dataset import Dataset

log = logging.getLogger(__name__)

DAYS_PER_MONTH = 21

LABEL_POLICIES = ("labels-realized", "release-dated")


@dataclass(frozen=True)
class RidgeModel:
    """Centered ridge fit: intercept unpenalized, coefficients shrunk.

    ``scale`` carries per-column divisors when features were variance-scaled
    at fit time; predictions and :meth:`effective_coef` fold it back in.
    """

    intercept: float
    coef: np.ndarray
    penalty: float
    train_cutoff: pd.Period | None = None
    scale: np.ndarray | None = None

    def effective_coef(self) -> np.ndarray:
        return self.coef if self.scale is None else self.coef / self.scale

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.intercept + np.asarray(X, dtype=float) @ self.effective_coef()


def fit_ridge(X: np.ndarray, y: np.ndarray, penalty: float) -> RidgeModel:
    """Solve (Xc'Xc + penalty*I) b = Xc'yc on column-centered data."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be n x D aligned with y")
    if len(y) < 2:
        raise ValueError("need at least two training rows")
    if penalty <= 0:
        raise ValueError("penalty must be positive")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite training values")
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    yc = y - y_mean
    gram = Xc.T @ Xc
    gram[np.diag_indices_from(gram)] += penalty
    coef = np.linalg.solve(gram, Xc.T @ yc)
    return RidgeModel(intercept=float(y_mean - x_mean @ coef), coef=coef, penalty=penalty)


def parse_grid(text: str) -> np.ndarray:
    """Parse ``log:<lo>:<hi>:<n>`` into a log-spaced penalty grid."""
    parts = text.split(":")
    if len(parts) != 4 or parts[0] != "log":
        raise ValueError(f"bad grid spec {text!r}; expected log:<lo>:<hi>:<n>")
    lo, hi, n = float(parts[1]), float(parts[2]), int(parts[3])
    return np.geomspace(lo, hi, n)


def default_grid() -> np.ndarray:
    return np.geomspace(1e-2, 1e6, 9)


@dataclass
class _SubsetStats:
    """Sufficient statistics of a row subset for centered ridge algebra."""

    n: float
    sx: np.ndarray
    sy: float
    gram: np.ndarray
    xy: np.ndarray
    yy: float

    def __sub__(self, other: "_SubsetStats") -> "_SubsetStats":
        return _SubsetStats(
            self.n - other.n, self.sx - other.sx, self.sy - other.sy,
            self.gram - other.gram, self.xy - other.xy, self.yy - other.yy,
        )


def _stats(X: np.ndarray, y: np.ndarray) -> _SubsetStats:
    return _SubsetStats(
        n=float(len(y)), sx=X.sum(axis=0), sy=float(y.sum()),
        gram=X.T @ X, xy=X.T @ y, yy=float(y @ y),
    )


def _solve_from_stats(st: _SubsetStats, penalty: float) -> tuple[float, np.ndarray]:
    x_mean = st.sx / st.n
    y_mean = st.sy / st.n
    gram_c = st.gram - st.n * np.outer(x_mean, x_mean)
    xy_c = st.xy - st.n * x_mean * y_mean
    gram_c[np.diag_indices_from(gram_c)] += penalty
    coef = np.linalg.solve(gram_c, xy_c)
    return float(y_mean - x_mean @ coef), coef


def _block_mse(st: _SubsetStats, b0: float, coef: np.ndarray) -> float:
    sse = (
        st.yy - 2.0 * b0 * st.sy - 2.0 * coef @ st.xy
        + 2.0 * b0 * coef @ st.sx + coef @ st.gram @ coef + st.n * b0 * b0
    )
    return float(sse / st.n)


def select_penalty(X: np.ndarray, y: np.ndarray, grid, folds: int = 5, purge: int = 0) -> float:
    """Pick the penalty minimizing mean out-of-block MSE; ties go to the larger.

    Rows must arrive pre-sorted by release date; folds are contiguous time
    blocks, each held out once while the model trains on the rest. ``purge``
    additionally drops that many rows on each side of the held-out block from
    the training side (a guard against label-window overlap at the seams).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    grid = np.asarray(sorted(float(g) for g in grid))
    if len(grid) == 0:
        raise ValueError("empty penalty grid")
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if purge < 0:
        raise ValueError("purge must be >= 0")
    n = len(y)
    if n < folds:
        raise ValueError(f"{n} rows cannot fill {folds} folds")
    bounds = np.linspace(0, n, folds + 1).astype(int)
    total = _stats(X, y)
    mse = np.zeros(len(grid))
    for a, b in zip(bounds[:-1], bounds[1:]):
        block = _stats(X[a:b], y[a:b])
        train = total - block
        lo, hi = max(a - purge, 0), min(b + purge, n)
        if lo < a:
            train = train - _stats(X[lo:a], y[lo:a])
        if b < hi:
            train = train - _stats(X[b:hi], y[b:hi])
        if train.n < 2:
            raise ValueError("purge gap leaves no training rows")
        for gi, theta in enumerate(grid):
            b0, coef = _solve_from_stats(train, theta)
            mse[gi] += _block_mse(block, b0, coef)
    mse /= folds
    best = mse.min()
    return float(grid[np.nonzero(mse == best)[0].max()])


def realized_return(
    dataset: Dataset,
    firm_id: str,
    start_date,
    horizon_months: int = 12,
    days_per_month: int = DAYS_PER_MONTH,
    include_day0: bool = False,
    through_gaps: bool = False,
    compounder: CompoundedReturns | None = None,
) -> float | None:
    """Compounded simple return over the trading days following ``start_date``.

    The window covers ``horizon_months * days_per_month`` days after the start
    day, excluding day 0 unless ``include_day0``. Returns None when the window
    extends past the data or the firm stops trading (unless ``through_gaps``
    compounds through the available prefix).
    """
    if firm_id not in dataset.market.returns.columns:
        raise KeyError(f"unknown firm {firm_id!r}")
    cr = compounder or CompoundedReturns(dataset.market.returns)
    i = dataset.calendar.index_of(start_date)
    i0 = i if include_day0 else i + 1
    i1 = i + horizon_months * days_per_month
    prod = cr.window_product(firm_id, i0, i1, through_gaps=through_gaps)
    return None if prod is None else prod - 1.0


@dataclass
class ForecastRun:
    """Out-of-sample forecasts plus the per-month models that produced them."""

    forecasts: pd.DataFrame
    models: dict[pd.Period, RidgeModel]
    skipped: list[tuple[pd.Period, str]]
    label_policy: str
    horizon_months: int
    days_per_month: int
    burn_in_months: int
    training_max_label_end: dict[pd.Period, pd.Timestamp] = field(default_factory=dict)
    training_counts: dict[pd.Period, int] = field(default_factory=dict)


def _report_frame(dataset: Dataset, horizon_months: int, days_per_month: int):
    """Reports in deterministic order with features and realized labels."""
    rep = dataset.reports.sort_values(["release_date", "report_id"], kind="stable")
    rows = [dataset.embeddings.row(r) for r in rep["report_id"]]
    X = dataset.embeddings.full_vectors()[rows]
    cal = dataset.calendar
    cr = CompoundedReturns(dataset.market.returns)
    horizon_days = horizon_months * days_per_month
    labels = np.full(len(rep), np.nan)
    label_end = np.full(len(rep), np.datetime64("NaT"), dtype="datetime64[ns]")
    for k, (rid, row) in enumerate(rep.iterrows()):
        i1 = row.day0_idx + horizon_days
        if i1 < len(cal):
            label_end[k] = cal.day(i1).to_datetime64()
            prod = cr.window_product(row.firm_id, row.day0_idx + 1, i1)
            if prod is not None:
                labels[k] = prod - 1.0
    rep = rep.copy()
    rep["label"] = labels
    rep["label_end"] = label_end
    return rep, X


def _training_mask(rep: pd.DataFrame, month: pd.Period, policy: str) -> np.ndarray:
    has_label = rep["label"].notna().to_numpy()
    if policy == "labels-realized":
        realized = (rep["label_end"] < month.start_time).to_numpy()
        return has_label & realized
    if policy == "release-dated":
        return has_label & (rep["release_month"] < month).to_numpy()
    raise ValueError(f"unknown label policy {policy!r}")


def expanding_forecasts(
    dataset: Dataset,
    burn_in_months: int,
    label_policy: str = "labels-realized",
    grid=None,
    folds: int = 5,
    horizon_months: int = 12,
    days_per_month: int = DAYS_PER_MONTH,
    cv_purge: int = 0,
    scale_features: bool = False,
) -> ForecastRun:
    """Refit monthly on the admitted history and score that month's reports.

    Under ``labels-realized`` a report joins the training set only once its
    label window has closed before the forecast month; ``release-dated``
    admits every earlier-released report, a literal prior-month reading that
    leaks unrealized label information and exists for comparison only.
    Embedding coordinates share a scale by construction, so columns are
    centered but not variance-scaled unless ``scale_features`` asks for it.
    """
    if burn_in_months < 12:
        raise ValueError("burn_in_months must be >= 12")
    if label_policy not in LABEL_POLICIES:
        raise ValueError(f"label_policy must be one of {LABEL_POLICIES}")
    grid = default_grid() if grid is None else np.asarray(list(grid), dtype=float)
    rep, X = _report_frame(dataset, horizon_months, days_per_month)
    months = rep["release_month"].to_numpy()
    first = rep["release_month"].min()
    last = rep["release_month"].max()
    all_months = pd.period_range(first, last, freq="M")

    models: dict[pd.Period, RidgeModel] = {}
    skipped: list[tuple[pd.Period, str]] = []
    max_label_end: dict[pd.Period, pd.Timestamp] = {}
    counts: dict[pd.Period, int] = {}
    out = []
    for tau in all_months[burn_in_months:]:
        score = months == tau
        if not score.any():
            continue
        train = _training_mask(rep, tau, label_policy)
        n_train = int(train.sum())
        if n_train < max(folds, 2):
            skipped.append((tau, f"training set too small ({n_train} rows)"))
            log.warning("skipping %s: %d training rows", tau, n_train)
            continue
        Xt, yt = X[train], rep["label"].to_numpy()[train]
        scale = None
        if scale_features:
            scale = Xt.std(axis=0)
            scale[scale == 0] = 1.0
            Xt = Xt / scale
        theta = select_penalty(Xt, yt, grid, folds=folds, purge=cv_purge)
        model = fit_ridge(Xt, yt, theta)
        model = RidgeModel(
            model.intercept, model.coef, model.penalty, train_cutoff=tau - 1, scale=scale
        )
        models[tau] = model
        max_label_end[tau] = rep["label_end"][train].max()
        counts[tau] = n_train
        preds = model.predict(X[score])
        sub = rep.loc[score, ["report_id", "firm_id", "release_date"]].copy()
        sub["predicted_return"] = preds
        out.append(sub)

    forecasts = (
        pd.concat(out, ignore_index=True)
        if out
        else pd.DataFrame(columns=["report_id", "firm_id", "release_date", "predicted_return"])
    )
    return ForecastRun(
        forecasts=forecasts,
        models=models,
        skipped=skipped,
        label_policy=label_policy,
        horizon_months=horizon_months,
        days_per_month=days_per_month,
        burn_in_months=burn_in_months,
        training_max_label_end=max_label_end,
        training_counts=counts,
    )


def audit_no_lookahead(dataset: Dataset, run: ForecastRun) -> int:
    """Count training rows whose label window survives into the forecast month.

    Re-derives label end dates from the calendar and replays the selection
    rule for every fitted month; also cross-checks the maxima recorded during
    the run. Returns the violation count (0 means clean).
    """
    rep, _ = _report_frame(dataset, run.horizon_months, run.days_per_month)
    violations = 0
    for tau in run.models:
        mask = _training_mask(rep, tau, run.label_policy)
        ends = rep["label_end"][mask]
        if run.label_policy == "labels-realized":
            violations += int((ends >= tau.start_time).sum())
        recorded = run.training_max_label_end.get(tau)
        if (
            run.label_policy == "labels-realized"
            and recorded is not None
            and recorded >= tau.start_time
        ):
            violations += 1
    return violations
