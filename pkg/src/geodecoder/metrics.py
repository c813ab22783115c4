"""Correlation and reconstruction metrics.

Pearson/Spearman correlate ground-truth distances with latent geodesics;
MAE/MSE and mean per-sample F1 measure reconstruction quality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decoder import BCE, MSE, _sigmoid
from .latents import LatentTable

PAIR_ENUM_LIMIT = 10_000_000  # above this, fall back to random pairs
SAMPLED_PAIRS = 100_000


class UndefinedCorrelation(ValueError):
    """Correlation undefined: constant input or too few pairs."""


def pearson(a, b) -> float:
    """Product-moment correlation coefficient."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("pearson expects two equal-length vectors")
    if len(a) < 2:
        raise UndefinedCorrelation("need at least two observations")
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt(np.sum(da * da) * np.sum(db * db))
    if denom == 0.0:
        raise UndefinedCorrelation("constant input")
    return float(np.dot(da, db) / denom)


def average_ranks(a) -> np.ndarray:
    """1-based ranks; ties receive the mean of their rank range."""
    a = np.asarray(a)
    if len(a) == 0:
        return np.empty(0)
    order = np.argsort(a, kind="stable")
    sorted_vals = a[order]
    boundary = np.empty(len(a), dtype=bool)
    boundary[0] = True
    boundary[1:] = sorted_vals[1:] != sorted_vals[:-1]
    group = np.cumsum(boundary) - 1
    counts = np.bincount(group)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    mean_rank = starts + (counts - 1) / 2.0 + 1.0
    ranks = np.empty(len(a))
    ranks[order] = mean_rank[group]
    return ranks


def spearman(a, b) -> float:
    """Pearson correlation of average ranks."""
    return pearson(average_ranks(a), average_ranks(b))


def reconstruction_metrics(outputs, targets, kind: str) -> dict:
    """MSE datasets: entry-wise MAE and MSE.  BCE datasets: mean per-sample
    binary F1 at threshold 0.5 on the squashed outputs; an all-zero target
    row with an all-zero prediction scores 1."""
    outputs = np.atleast_2d(np.asarray(outputs, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if outputs.shape != targets.shape:
        raise ValueError(f"outputs {outputs.shape} vs targets {targets.shape}")
    if kind == MSE:
        diff = outputs - targets
        return {"mae": float(np.mean(np.abs(diff))), "mse": float(np.mean(diff * diff))}
    if kind == BCE:
        pred = _sigmoid(outputs) > 0.5
        tgt = targets > 0.5
        tp = np.sum(pred & tgt, axis=1).astype(float)
        fp = np.sum(pred & ~tgt, axis=1).astype(float)
        fn = np.sum(~pred & tgt, axis=1).astype(float)
        denom = 2.0 * tp + fp + fn
        f1 = np.where(denom > 0.0, 2.0 * tp / np.where(denom > 0, denom, 1.0), 1.0)
        return {"mean_f1": float(np.mean(f1))}
    raise ValueError(f"unknown loss kind {kind!r}")


@dataclass(frozen=True)
class CorrelationResult:
    pearson: float
    spearman: float
    n_points: int
    n_pairs: int
    capped: bool  # True when pairs were subsampled


def _sample_pairs(m: int, k: int, rng: np.random.Generator):
    ii = np.empty(0, dtype=np.int64)
    jj = np.empty(0, dtype=np.int64)
    while len(ii) < k:
        a = rng.integers(0, m, size=k)
        b = rng.integers(0, m, size=k)
        keep = a != b
        ii = np.concatenate([ii, a[keep]])
        jj = np.concatenate([jj, b[keep]])
    return ii[:k], jj[:k]


def distance_correlations(table: LatentTable, oracle, n_points: int = 5000,
                          seed: int = 0) -> CorrelationResult:
    """Correlate latent geodesic distances against an oracle's distances.

    Samples up to n_points rows, takes all pairs among them, and falls
    back to SAMPLED_PAIRS random pairs when full enumeration would exceed
    PAIR_ENUM_LIMIT."""
    n = len(table)
    rng = np.random.default_rng(seed)
    m = min(n_points, n)
    chosen = np.sort(rng.choice(n, size=m, replace=False))
    total = m * (m - 1) // 2
    if total < 1:
        raise UndefinedCorrelation("need at least two points")
    capped = total > PAIR_ENUM_LIMIT
    if capped:
        ii, jj = _sample_pairs(m, SAMPLED_PAIRS, rng)
    else:
        ii, jj = np.triu_indices(m, k=1)
    rows_i = chosen[ii]
    rows_j = chosen[jj]

    manifold = table.manifold
    geo = np.empty(len(rows_i))
    for start in range(0, len(rows_i), 1_000_000):  # bounded gather temporaries
        sl = slice(start, start + 1_000_000)
        geo[sl] = manifold.distance(table.points[rows_i[sl]], table.points[rows_j[sl]])
    truth = oracle.pairs(rows_i, rows_j)
    return CorrelationResult(
        pearson=pearson(geo, truth),
        spearman=spearman(geo, truth),
        n_points=m,
        n_pairs=len(rows_i),
        capped=capped,
    )
