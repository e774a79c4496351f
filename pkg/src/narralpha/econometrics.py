"""Shared inference kernel: OLS, HAC and clustered covariance, FE absorption.

All estimators are pure functions over in-memory arrays; callers may
parallelize across regressions freely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd


@dataclass
class RegressionResult:
    names: list[str]
    params: np.ndarray
    se: np.ndarray
    tstats: np.ndarray
    nobs: int
    adj_r2: float
    se_type: str
    cov: np.ndarray

    def as_dict(self) -> dict:
        return {
            "se_type": self.se_type,
            "nobs": int(self.nobs),
            "adj_r2": float(self.adj_r2),
            "coef": {n: float(b) for n, b in zip(self.names, self.params)},
            "se": {n: float(s) for n, s in zip(self.names, self.se)},
            "t": {n: float(t) for n, t in zip(self.names, self.tstats)},
        }


def add_intercept(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return np.column_stack([np.ones(len(X)), X])


def _check_rank(X: np.ndarray, names: list[str]) -> None:
    rank = np.linalg.matrix_rank(X)
    if rank == X.shape[1]:
        return
    # walk columns to name the dependent ones
    dependent = []
    kept: list[int] = []
    for j in range(X.shape[1]):
        cand = X[:, kept + [j]]
        if np.linalg.matrix_rank(cand) == len(kept) + 1:
            kept.append(j)
        else:
            dependent.append(names[j])
    raise ValueError(f"rank-deficient design: dependent columns {dependent}")


def hac_cov(X: np.ndarray, resid: np.ndarray, lags: int) -> np.ndarray:
    """Newey-West covariance with Bartlett weights; lags=0 is plain HC0."""
    n = len(resid)
    u = X * resid[:, None]
    meat = u.T @ u
    for j in range(1, lags + 1):
        w = 1.0 - j / (lags + 1.0)
        gamma = u[j:].T @ u[:-j]
        meat += w * (gamma + gamma.T)
    bread = np.linalg.inv(X.T @ X)
    return bread @ meat @ bread


def cluster_cov(X: np.ndarray, resid: np.ndarray, groups: np.ndarray, k_model: int) -> np.ndarray:
    """One-way cluster-robust covariance with CR1 small-sample scaling."""
    n = len(resid)
    u = X * resid[:, None]
    codes, _ = pd.factorize(groups)
    g = codes.max() + 1
    sums = np.zeros((g, X.shape[1]))
    np.add.at(sums, codes, u)
    meat = sums.T @ sums
    bread = np.linalg.inv(X.T @ X)
    scale = (g / (g - 1.0)) * ((n - 1.0) / (n - k_model)) if g > 1 else 1.0
    return scale * bread @ meat @ bread


def twoway_cluster_cov(
    X: np.ndarray, resid: np.ndarray, g1: np.ndarray, g2: np.ndarray, k_model: int
) -> np.ndarray:
    """Two-way clustered covariance: V(g1) + V(g2) - V(g1 x g2)."""
    inter = pd.factorize(pd.MultiIndex.from_arrays([g1, g2]))[0]
    return (
        cluster_cov(X, resid, g1, k_model)
        + cluster_cov(X, resid, g2, k_model)
        - cluster_cov(X, resid, inter, k_model)
    )


def ols(
    X: np.ndarray,
    y: np.ndarray,
    se_type: str = "ols",
    lags: int = 0,
    names: list[str] | None = None,
) -> RegressionResult:
    """OLS with homoskedastic or Newey-West standard errors.

    ``X`` is used as supplied; prepend a constant with :func:`add_intercept`
    when an intercept is wanted. ``se_type`` is "ols" or "nw" (Bartlett
    weights over ``lags``; lags=0 reproduces HC0 exactly).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite values in regression inputs")
    n, k = X.shape
    if names is None:
        names = [f"x{j}" for j in range(k)]
    _check_rank(X, names)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    ssr = float(resid @ resid)
    sst = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ssr / sst if sst > 0 else 0.0
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - k) if n > k else np.nan
    if se_type == "ols":
        sigma2 = ssr / (n - k)
        cov = sigma2 * np.linalg.inv(X.T @ X)
        label = "ols"
    elif se_type == "nw":
        cov = hac_cov(X, resid, lags)
        label = f"nw({lags})"
    else:
        raise ValueError(f"unknown se_type {se_type!r}")
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.nan)
    return RegressionResult(names, beta, se, t, n, adj, label, cov)


def demean_within(
    data: np.ndarray,
    group_codes: list[np.ndarray],
    tol: float = 1e-10,
    max_sweeps: int = 10_000,
) -> np.ndarray:
    """Absorb up to two fixed-effect groups by alternating demeaning.

    Iterates group-by-group mean removal on every column until the largest
    coordinate change in a sweep falls below ``tol``.
    """
    out = np.array(data, dtype=float, copy=True)
    if not group_codes:
        return out
    sizes = [np.bincount(c).astype(float) for c in group_codes]
    for _ in range(max_sweeps):
        delta = 0.0
        for codes, size in zip(group_codes, sizes):
            sums = np.zeros((len(size), out.shape[1]))
            np.add.at(sums, codes, out)
            means = sums / size[:, None]
            adjust = means[codes]
            out -= adjust
            delta = max(delta, float(np.abs(adjust).max(initial=0.0)))
        if delta < tol:
            return out
    raise RuntimeError(f"fixed-effect demeaning did not converge in {max_sweeps} sweeps")


def panel_regression(
    rows: pd.DataFrame,
    y: str,
    x: list[str],
    fe_groups: list[str] | None = None,
    cluster_keys: tuple[str, str] | None = None,
    nw_lags: int = 0,
) -> RegressionResult:
    """Within-transformed OLS with optional two-way clustered errors.

    ``fe_groups`` lists up to two categorical columns; interacted fixed
    effects should be supplied as a single pre-combined key. Rows with any
    missing value in the used columns are dropped (listwise deletion).
    """
    fe_groups = fe_groups or []
    if len(fe_groups) > 2:
        raise ValueError("at most two fixed-effect groups are supported")
    used = [y] + list(x) + list(fe_groups) + (list(cluster_keys) if cluster_keys else [])
    data = rows[list(dict.fromkeys(used))].dropna()
    n = len(data)
    if n == 0:
        raise ValueError("no complete rows after listwise deletion")
    yx = data[[y] + list(x)].to_numpy(dtype=float)

    codes_list = []
    absorbed_levels = 0
    for key in fe_groups:
        codes, uniques = pd.factorize(data[key])
        if (np.bincount(codes) == 1).all():
            raise ValueError(f"fixed-effect group {key!r} has only singleton categories")
        codes_list.append(codes)
        absorbed_levels += len(uniques)
    df_absorb = max(absorbed_levels - (len(fe_groups) - 1), 0) if fe_groups else 0

    transformed = demean_within(yx, codes_list) if codes_list else yx
    yt = transformed[:, 0]
    Xt = transformed[:, 1:]
    if not fe_groups:
        Xt = add_intercept(Xt)
        names = ["const"] + list(x)
    else:
        names = list(x)
    _check_rank(Xt, names)
    beta, *_ = np.linalg.lstsq(Xt, yt, rcond=None)
    resid = yt - Xt @ beta
    k_model = Xt.shape[1] + df_absorb
    if n <= k_model:
        raise ValueError("not enough rows for the absorbed model")

    if cluster_keys is not None:
        g1 = data[cluster_keys[0]].to_numpy()
        g2 = data[cluster_keys[1]].to_numpy()
        cov = twoway_cluster_cov(Xt, resid, g1, g2, k_model)
        label = f"cluster2({cluster_keys[0]},{cluster_keys[1]})"
    elif nw_lags > 0:
        cov = hac_cov(Xt, resid, nw_lags)
        label = f"nw({nw_lags})"
    else:
        sigma2 = float(resid @ resid) / (n - k_model)
        cov = sigma2 * np.linalg.inv(Xt.T @ Xt)
        label = "ols"

    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.nan)
    yv = data[y].to_numpy(dtype=float)
    ssr = float(resid @ resid)
    sst = float(((yv - yv.mean()) ** 2).sum())
    r2 = 1.0 - ssr / sst if sst > 0 else 0.0
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - k_model)
    return RegressionResult(names, beta, se, t, n, adj, label, cov)


def correlation_matrix(series: pd.DataFrame) -> pd.DataFrame:
    """Pairwise Pearson correlations in percent over aligned rows."""
    if series.isna().any().any():
        raise ValueError("series must be aligned with no missing months")
    std = series.std(ddof=1)
    flat = std[std == 0]
    if len(flat):
        raise ValueError(f"zero-variance series: {list(flat.index)}")
    return series.corr() * 100.0
