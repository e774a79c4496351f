"""Slow, independent reference implementations used only by tests.

Each oracle recomputes a quantity through a different route than the engine
(iterative minimization, full enumeration, elementwise loops) so agreement
is evidence rather than tautology.
"""

from __future__ import annotations

import itertools
from types import SimpleNamespace

import numpy as np


def ridge_gd(X, y, penalty, tol_scale: float = 1e-12, max_iter: int = 2_000_000):
    """Minimize the penalized objective by plain gradient descent.

    Objective: sum (y - b0 - X b)^2 + penalty * ||b||^2, intercept unpenalized.
    Runs until the gradient max-norm falls below tol_scale * n.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    Z = np.column_stack([np.ones(n), X])
    ridge_diag = np.concatenate([[0.0], np.full(d, penalty)])
    lam_max = np.linalg.eigvalsh(Z.T @ Z).max()
    step = 1.0 / (2.0 * (lam_max + penalty))
    params = np.zeros(d + 1)
    tol = tol_scale * n
    for _ in range(max_iter):
        resid = y - Z @ params
        grad = -2.0 * Z.T @ resid + 2.0 * ridge_diag * params
        if np.abs(grad).max() < tol:
            break
        params = params - step * grad
    return params[0], params[1:]


def shapley_permutation_enum(values, n_players: int) -> np.ndarray:
    """Average marginal contributions over all n! orderings.

    ``values`` maps a bitmask (index or dict) to the coalition value.
    """
    phi = np.zeros(n_players)
    count = 0
    for perm in itertools.permutations(range(n_players)):
        mask = 0
        prev = values[mask]
        for k in perm:
            mask |= 1 << k
            cur = values[mask]
            phi[k] += cur - prev
            prev = cur
        count += 1
    return phi / count


def drift_turnover(weight_seq, return_seq, rf_seq):
    """Per-transition turnover from dict-based weights via elementwise loops.

    ``weight_seq`` is a list of {asset: weight}; ``return_seq[i]`` holds the
    raw returns earned between weights i and i+1; ``rf_seq[i]`` the matching
    risk-free rate.
    """
    out = []
    for i in range(len(weight_seq) - 1):
        w_prev = weight_seq[i]
        w_new = weight_seq[i + 1]
        rf = rf_seq[i]
        rets = return_seq[i]
        denom = 1.0 + rf
        for a, w in w_prev.items():
            denom += w * (rets.get(a, rf) - rf)
        drift = {}
        for a, w in w_prev.items():
            drift[a] = w * (1.0 + rf + (rets.get(a, rf) - rf)) / denom
        total = 0.0
        for a in set(drift) | set(w_new):
            total += abs(w_new.get(a, 0.0) - drift.get(a, 0.0))
        out.append(total)
    return out


def groupby_benchmark(firm_cells: dict, caps: dict, day_returns: dict) -> dict:
    """Value-weighted cell returns for one day by direct accumulation."""
    sums: dict = {}
    weights: dict = {}
    for firm, cell in firm_cells.items():
        r = day_returns.get(firm)
        if r is None or not np.isfinite(r):
            continue
        sums[cell] = sums.get(cell, 0.0) + caps[firm] * r
        weights[cell] = weights.get(cell, 0.0) + caps[firm]
    return {c: sums[c] / weights[c] for c in sums if weights[c] > 0}


def hac_direct(X: np.ndarray, resid: np.ndarray, lags: int) -> np.ndarray:
    """Bartlett-weighted HAC covariance via explicit double summation."""
    X = np.asarray(X, dtype=float)
    resid = np.asarray(resid, dtype=float)
    n, k = X.shape
    meat = np.zeros((k, k))
    for t in range(n):
        xt = X[t][:, None]
        meat += resid[t] * resid[t] * (xt @ xt.T)
    for j in range(1, lags + 1):
        w = 1.0 - j / (lags + 1.0)
        for t in range(j, n):
            xt = X[t][:, None]
            xs = X[t - j][:, None]
            outer = xt @ xs.T
            meat += w * resid[t] * resid[t - j] * (outer + outer.T)
    bread = np.linalg.inv(X.T @ X)
    return bread @ meat @ bread


def hc1_cov(X: np.ndarray, resid: np.ndarray, k_model: int | None = None) -> np.ndarray:
    """Heteroskedasticity-robust covariance with the n/(n-k) correction."""
    X = np.asarray(X, dtype=float)
    n, k = X.shape
    k_model = k if k_model is None else k_model
    meat = np.zeros((k, k))
    for t in range(n):
        xt = X[t][:, None]
        meat += resid[t] * resid[t] * (xt @ xt.T)
    bread = np.linalg.inv(X.T @ X)
    return (n / (n - k_model)) * bread @ meat @ bread


def cv_mse(X: np.ndarray, y: np.ndarray, penalty: float, folds: int, purge: int = 0) -> float:
    """Mean out-of-block MSE by literal refits (checks the fast CV path)."""
    from .forecast import fit_ridge

    n = len(y)
    bounds = np.linspace(0, n, folds + 1).astype(int)
    total = 0.0
    for a, b in zip(bounds[:-1], bounds[1:]):
        train = np.r_[0 : max(a - purge, 0), min(b + purge, n) : n]
        model = fit_ridge(X[train], y[train], penalty)
        pred = model.predict(X[a:b])
        total += float(np.mean((y[a:b] - pred) ** 2))
    return total / folds


def oracle_suite() -> SimpleNamespace:
    """Bundle of the reference implementations exercised by the test suite."""
    return SimpleNamespace(
        ridge_gd=ridge_gd,
        shapley_permutation_enum=shapley_permutation_enum,
        drift_turnover=drift_turnover,
        groupby_benchmark=groupby_benchmark,
        hac_direct=hac_direct,
        hc1_cov=hc1_cov,
        cv_mse=cv_mse,
    )
