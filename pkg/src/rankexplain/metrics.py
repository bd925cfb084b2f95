"""Rank correlation, explanation quality scores, and NDCG.

Rankings produced by this package are strict (ties are broken upstream by
doc index), so Kendall's tau needs no tie variant: tau-a with
(concordant - discordant) / (n * (n - 1) / 2).
"""
from __future__ import annotations

import numpy as np

from .letor import QueryGroup
from .rankers import FeatureMask, MaskPolicy, RankerModel, Ranking, rank


def kendall_tau(a: Ranking, b: Ranking) -> float:
    """Kendall rank correlation between two strict rankings of one doc set."""
    n = len(a)
    if len(b) != n:
        raise ValueError(f"rankings cover different doc sets ({n} vs {len(b)} docs)")
    if n < 2:
        raise ValueError("kendall tau is undefined for fewer than 2 documents")
    pa = a.positions()
    pb = b.positions()
    da = np.sign(pa[:, None] - pa[None, :])
    db = np.sign(pb[:, None] - pb[None, :])
    upper = np.triu_indices(n, 1)
    concordance = int((da[upper] * db[upper]).sum())
    return concordance / (n * (n - 1) / 2)


def validity(model: RankerModel, query: QueryGroup, mask: FeatureMask, policy: MaskPolicy) -> float:
    """Tau between the explanation-only ranking and the original ranking."""
    original = rank(model, query, FeatureMask.full(mask.universe_size), policy)
    masked = rank(model, query, mask, policy)
    return kendall_tau(masked, original)


def completeness(model: RankerModel, query: QueryGroup, mask: FeatureMask, policy: MaskPolicy) -> float:
    """Negative tau between the complement-features ranking and the original."""
    original = rank(model, query, FeatureMask.full(mask.universe_size), policy)
    rest = rank(model, query, mask.complement(), policy)
    return -kendall_tau(rest, original)


def ndcg_at(k: int, ranking: Ranking, labels: np.ndarray) -> float:
    """NDCG@k with exponential gain 2^label - 1 and log2(position+1) discount."""
    if k <= 0:
        raise ValueError("k must be a positive integer")
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0:
        raise ValueError("labels must be nonnegative")
    gains = np.power(2.0, labels.astype(np.float64)) - 1.0
    discounts = 1.0 / np.log2(np.arange(2, len(labels) + 2))
    depth = min(k, len(labels))
    dcg = float((gains[ranking.order[:depth]] * discounts[:depth]).sum())
    ideal = float((np.sort(gains)[::-1][:depth] * discounts[:depth]).sum())
    if ideal == 0.0:
        return 0.0
    return dcg / ideal
