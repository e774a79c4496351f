"""Shapley decomposition of portfolio performance over embedding blocks.

Coalition forecasts rescore every report with a subset of its blocks (zero
baseline for the excluded ones) under the frozen full-embedding model
sequence, then rerun the standard lookback backtest. Group contributions are
order-averaged marginal improvements of a performance functional, exact over
all coalitions or estimated by permutation sampling.
"""

from __future__ import annotations

import itertools
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .dataset import Dataset, EmbeddingStore
from .forecast import ForecastRun

log = logging.getLogger(__name__)

MAX_EXACT_PLAYERS = 24

FUNCTIONALS = ("sr", "ret")


@dataclass(frozen=True)
class Partition:
    """Named players over the embedding file's group labels.

    ``players`` maps a player name to the file labels it owns; labels in
    ``background`` are included in every coalition (and in the empty one).
    """

    players: tuple[str, ...]
    player_labels: dict[str, tuple[str, ...]]
    background: tuple[str, ...] = ()

    @property
    def n_players(self) -> int:
        return len(self.players)


def identity_partition(labels, background=()) -> Partition:
    players = tuple(lab for lab in labels if lab not in set(background))
    return Partition(
        players=players,
        player_labels={lab: (lab,) for lab in players},
        background=tuple(background),
    )


def mapped_partition(labels, mapping: dict, background=()) -> Partition:
    """Group file labels into named players via a label -> player mapping."""
    bg = set(background)
    grouped: dict[str, list[str]] = {}
    for lab in labels:
        if lab in bg:
            continue
        if lab not in mapping:
            raise ValueError(f"unmapped group label {lab!r}")
        grouped.setdefault(mapping[lab], []).append(lab)
    return Partition(
        players=tuple(grouped),
        player_labels={k: tuple(v) for k, v in grouped.items()},
        background=tuple(background),
    )


def coalition_embedding(store: EmbeddingStore, report_id: str, groups) -> np.ndarray:
    """Weighted block sum keeping only ``groups``; excluded blocks are zero.

    Weights are not renormalized; the empty coalition yields the zero vector.
    """
    i = store.row(report_id)
    keep = set(groups)
    out = np.zeros(store.dim)
    for p, lab in enumerate(store.labels):
        if lab in keep:
            out += store.weights[i, p] * store.blocks[i, p].astype(np.float64)
    return out


class CoalitionEngine:
    """Caches coalition H-L series for repeated Shapley evaluations.

    The per-report forecast decomposes into a base term (intercept plus
    always-included background blocks) and one additive contribution per
    player, so any coalition forecast is a masked row sum.
    """

    def __init__(
        self,
        dataset: Dataset,
        run: ForecastRun,
        partition: Partition,
        lookback: int = 12,
        min_breadth: int = 10,
        start: pd.Period | None = None,
        end: pd.Period | None = None,
        threads: int = 1,
    ):
        self.partition = partition
        self.lookback = lookback
        self.min_breadth = min_breadth
        self.threads = max(1, threads)
        self._cache: dict[int, pd.Series] = {}
        self._lock = threading.Lock()
        self._build(dataset, run, start, end)

    # -- construction -----------------------------------------------------
    def _build(self, dataset: Dataset, run: ForecastRun, start, end) -> None:
        store = dataset.embeddings
        reports = dataset.reports
        scored = reports[reports["release_month"].isin(list(run.models))]
        scored = scored.sort_values(["release_date", "report_id"], kind="stable")
        n = len(scored)
        rows = np.array([store.row(r) for r in scored["report_id"]])
        months = scored["release_month"].to_numpy()

        coefs = {m: run.models[m].effective_coef() for m in run.models}
        intercepts = {m: run.models[m].intercept for m in run.models}
        beta = np.stack([coefs[m] for m in months])              # (n, D)
        base = np.array([intercepts[m] for m in months])

        blocks = store.blocks[rows].astype(np.float64)           # (n, G, D)
        weights = store.weights[rows]                            # (n, G)
        proj = np.einsum("ngd,nd->ng", blocks, beta) * weights   # (n, G)

        label_pos = {lab: p for p, lab in enumerate(store.labels)}
        P = self.partition.n_players
        contrib = np.zeros((n, P))
        for k, player in enumerate(self.partition.players):
            for lab in self.partition.player_labels[player]:
                contrib[:, k] += proj[:, label_pos[lab]]
        for lab in self.partition.background:
            base = base + proj[:, label_pos[lab]]
        self._contrib = contrib
        self._base = base

        # backtest skeleton: coalition-independent membership and returns
        monthly = dataset.market.monthly_returns()
        firm_ids = scored["firm_id"].to_numpy()
        first = pd.Period(months.min(), freq="M") + 1
        last = monthly.index.max()
        if start is not None:
            first = max(first, start)
        if end is not None:
            last = min(last, end)
        self._months = []
        self._skeleton = []
        month_index = pd.PeriodIndex(months, freq="M")
        for m in pd.period_range(first, last, freq="M"):
            in_window = (month_index >= m - self.lookback) & (month_index <= m - 1)
            idx = np.nonzero(in_window)[0]
            if len(idx) == 0:
                continue
            firms = firm_ids[idx]
            uniq = np.unique(firms)
            caps = dataset.market.lagged_caps(m)
            caps = caps[caps > 0]
            keep = np.isin(uniq, caps.index.to_numpy())
            uniq = uniq[keep]
            if len(uniq) < self.min_breadth:
                continue
            code_of = {f: c for c, f in enumerate(uniq)}
            firm_codes = np.array([code_of.get(f, -1) for f in firms])
            sel = firm_codes >= 0
            rets = monthly.loc[m] if m in monthly.index else pd.Series(dtype=float)
            ret_vec = rets.reindex(uniq).fillna(0.0).to_numpy(dtype=float)
            cap_vec = caps.reindex(uniq).to_numpy(dtype=float)
            self._months.append(m)
            self._skeleton.append((idx[sel], firm_codes[sel], len(uniq), cap_vec, ret_vec))

    # -- evaluation --------------------------------------------------------
    def coalition_forecasts(self, mask: int) -> np.ndarray:
        preds = self._base.copy()
        for k in range(self.partition.n_players):
            if mask >> k & 1:
                preds += self._contrib[:, k]
        return preds

    def hl_series(self, mask: int) -> pd.Series:
        with self._lock:
            hit = self._cache.get(mask)
        if hit is not None:
            return hit
        preds = self.coalition_forecasts(mask)
        out = np.empty(len(self._months))
        for j, (idx, codes, n_firms, caps, rets) in enumerate(self._skeleton):
            sums = np.bincount(codes, weights=preds[idx], minlength=n_firms)
            counts = np.bincount(codes, minlength=n_firms)
            signal = sums / counts
            order = np.lexsort((np.arange(n_firms), signal))
            ranks = np.empty(n_firms, dtype=int)
            ranks[order] = np.arange(1, n_firms + 1)
            deciles = np.ceil(ranks * 10 / n_firms).astype(int)
            top = deciles == 10
            bot = deciles == 1
            long_ret = float((caps[top] * rets[top]).sum() / caps[top].sum())
            short_ret = float((caps[bot] * rets[bot]).sum() / caps[bot].sum())
            out[j] = long_ret - short_ret
        series = pd.Series(out, index=pd.PeriodIndex(self._months, freq="M"))
        with self._lock:
            self._cache[mask] = series
        return series

    def value(self, mask: int, functional: str) -> float:
        series = self.hl_series(mask)
        if functional == "sr":
            sd = float(series.std(ddof=1))
            return float(series.mean()) / sd * math.sqrt(12.0) if sd > 0 else 0.0
        if functional == "ret":
            return float(series.mean()) * 100.0
        raise ValueError(f"unknown functional {functional!r}")

    def evaluate_masks(self, masks) -> None:
        """Precompute H-L series for the given masks, optionally in parallel."""
        todo = [m for m in masks if m not in self._cache]
        if self.threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                list(pool.map(self.hl_series, todo))
        else:
            for m in todo:
                self.hl_series(m)

    @property
    def full_mask(self) -> int:
        return (1 << self.partition.n_players) - 1


def coalition_value(engine: CoalitionEngine, groups, functional: str = "sr") -> float:
    """Functional value of the coalition given as player names or a bitmask."""
    if isinstance(groups, int):
        mask = groups
    else:
        names = list(engine.partition.players)
        mask = 0
        for g in groups:
            mask |= 1 << names.index(g)
    return engine.value(mask, functional)


@dataclass
class ShapleyReport:
    """Per-group contributions for each functional, plus share normalizations."""

    groups: list[str]
    phi: dict[str, np.ndarray]
    shares: dict[str, np.ndarray]              # phi / sum(phi)
    shares_vbase: dict[str, np.ndarray]        # phi / (V(full) - V(empty))
    v_full: dict[str, float]
    v_empty: dict[str, float]
    mode: str
    samples: int | None = None
    se: dict[str, np.ndarray] | None = None
    meta: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "groups": list(self.groups),
            "v_full": self.v_full,
            "v_empty": self.v_empty,
            "phi": {f: [float(v) for v in arr] for f, arr in self.phi.items()},
            "share_of_sum": {f: [float(v) for v in arr] for f, arr in self.shares.items()},
            "share_of_span": {f: [float(v) for v in arr] for f, arr in self.shares_vbase.items()},
            "meta": self.meta,
        }
        if self.samples is not None:
            out["samples"] = self.samples
        if self.se is not None:
            out["se"] = {f: [float(v) for v in arr] for f, arr in self.se.items()}
        return out


def _shares(phi: np.ndarray, span: float) -> tuple[np.ndarray, np.ndarray]:
    total = phi.sum()
    of_sum = phi / total if total != 0 else np.full_like(phi, np.nan)
    of_span = phi / span if span != 0 else np.full_like(phi, np.nan)
    return of_sum, of_span


def shapley_exact(
    engine: CoalitionEngine, functionals=FUNCTIONALS, tol: float = 1e-9
) -> ShapleyReport:
    """Exact Shapley values over all 2^P coalitions, efficiency-checked."""
    P = engine.partition.n_players
    if P > MAX_EXACT_PLAYERS:
        raise ValueError(f"{P} players exceeds the exact-mode limit {MAX_EXACT_PLAYERS}")
    masks = range(1 << P)
    engine.evaluate_masks(masks)
    values = {f: np.array([engine.value(m, f) for m in masks]) for f in functionals}
    fact = [math.factorial(k) for k in range(P + 1)]
    weight = [fact[s] * fact[P - s - 1] / fact[P] for s in range(P)]

    phi = {f: np.zeros(P) for f in functionals}
    for mask in masks:
        s = bin(mask).count("1")
        for k in range(P):
            if not mask >> k & 1:
                gain = weight[s]
                with_k = mask | (1 << k)
                for f in functionals:
                    phi[f][k] += gain * (values[f][with_k] - values[f][mask])

    full, empty = (1 << P) - 1, 0
    shares, shares_vbase, v_full, v_empty = {}, {}, {}, {}
    for f in functionals:
        span = values[f][full] - values[f][empty]
        gap = abs(phi[f].sum() - span)
        if gap > tol:
            raise AssertionError(f"efficiency violated for {f}: |sum(phi) - span| = {gap:.3e}")
        shares[f], shares_vbase[f] = _shares(phi[f], span)
        v_full[f], v_empty[f] = float(values[f][full]), float(values[f][empty])
    return ShapleyReport(
        groups=list(engine.partition.players),
        phi=phi,
        shares=shares,
        shares_vbase=shares_vbase,
        v_full=v_full,
        v_empty=v_empty,
        mode="exact",
        meta=_meta(engine),
    )


def shapley_mc(
    engine: CoalitionEngine,
    samples: int,
    seed: int,
    functionals=FUNCTIONALS,
) -> ShapleyReport:
    """Permutation-sampling Shapley estimate with per-group standard errors."""
    if samples < 100:
        raise ValueError("need at least 100 samples")
    P = engine.partition.n_players
    rng = np.random.default_rng(seed)
    perms = [rng.permutation(P) for _ in range(samples)]
    contributions = {f: np.zeros((samples, P)) for f in functionals}
    for i, perm in enumerate(perms):
        mask = 0
        prev = {f: engine.value(mask, f) for f in functionals}
        for k in perm:
            mask |= 1 << int(k)
            for f in functionals:
                cur = engine.value(mask, f)
                contributions[f][i, int(k)] = cur - prev[f]
                prev[f] = cur
    phi = {f: contributions[f].mean(axis=0) for f in functionals}
    se = {f: contributions[f].std(axis=0, ddof=1) / math.sqrt(samples) for f in functionals}
    full, empty = engine.full_mask, 0
    shares, shares_vbase, v_full, v_empty = {}, {}, {}, {}
    for f in functionals:
        span = engine.value(full, f) - engine.value(empty, f)
        shares[f], shares_vbase[f] = _shares(phi[f], span)
        v_full[f], v_empty[f] = engine.value(full, f), engine.value(empty, f)
    return ShapleyReport(
        groups=list(engine.partition.players),
        phi=phi,
        shares=shares,
        shares_vbase=shares_vbase,
        v_full=v_full,
        v_empty=v_empty,
        mode="mc",
        samples=samples,
        se=se,
        meta=_meta(engine, seed=seed),
    )


def _meta(engine: CoalitionEngine, seed: int | None = None) -> dict:
    meta = {
        "lookback": engine.lookback,
        "min_breadth": engine.min_breadth,
        "empty_coalition": "constant monthly forecasts; deciles resolved by the deterministic firm-id tiebreak",
        "background": list(engine.partition.background),
    }
    if seed is not None:
        meta["seed"] = seed
    return meta


def aggregate_groups(report: ShapleyReport, mapping: dict) -> ShapleyReport:
    """Sum contributions into meta-categories; shares are renormalized."""
    unmapped = [g for g in report.groups if g not in mapping]
    if unmapped:
        raise ValueError(f"unmapped groups: {unmapped}")
    cats = list(dict.fromkeys(mapping[g] for g in report.groups))
    idx = {c: [i for i, g in enumerate(report.groups) if mapping[g] == c] for c in cats}
    phi, shares, shares_vbase = {}, {}, {}
    se = {} if report.se is not None else None
    for f, arr in report.phi.items():
        agg = np.array([arr[idx[c]].sum() for c in cats])
        phi[f] = agg
        span = report.v_full[f] - report.v_empty[f]
        shares[f], shares_vbase[f] = _shares(agg, span)
        if se is not None:
            se[f] = np.array([np.sqrt((report.se[f][idx[c]] ** 2).sum()) for c in cats])
    return ShapleyReport(
        groups=cats,
        phi=phi,
        shares=shares,
        shares_vbase=shares_vbase,
        v_full=dict(report.v_full),
        v_empty=dict(report.v_empty),
        mode=report.mode,
        samples=report.samples,
        se=se,
        meta={**report.meta, "aggregated": True},
    )


def mc_from_value_table(
    values: np.ndarray, samples: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Permutation-sampling estimate and SE from a dense 2^P value table."""
    n = len(values)
    P = n.bit_length() - 1
    if 1 << P != n:
        raise ValueError("value table length must be a power of two")
    rng = np.random.default_rng(seed)
    contributions = np.zeros((samples, P))
    for i in range(samples):
        mask = 0
        prev = values[0]
        for k in rng.permutation(P):
            mask |= 1 << int(k)
            cur = values[mask]
            contributions[i, int(k)] = cur - prev
            prev = cur
    phi = contributions.mean(axis=0)
    se = contributions.std(axis=0, ddof=1) / math.sqrt(samples)
    return phi, se


def exact_from_value_table(values: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Exact Shapley values from a dense 2^P value table (testing utility)."""
    n = len(values)
    P = n.bit_length() - 1
    if 1 << P != n:
        raise ValueError("value table length must be a power of two")
    fact = [math.factorial(k) for k in range(P + 1)]
    weight = [fact[s] * fact[P - s - 1] / fact[P] for s in range(P)]
    phi = np.zeros(P)
    for mask in range(n):
        s = bin(mask).count("1")
        for k in range(P):
            if not mask >> k & 1:
                phi[k] += weight[s] * (values[mask | (1 << k)] - values[mask])
    span = values[n - 1] - values[0]
    if abs(phi.sum() - span) > max(tol, 1e-12 * max(1.0, abs(span))):
        raise AssertionError("efficiency violated on value table")
    return phi


def subsets_of(players: list[str]):
    """All coalitions of the named players (testing utility)."""
    for r in range(len(players) + 1):
        yield from itertools.combinations(players, r)
