"""Black-box document scoring with feature masking.

Every ranker exposes `score_query(X) -> scores`, where X is the (already
substituted) feature matrix of one query's documents. Masked scoring
replaces the inactive coordinates by the policy's substitution value and
feeds the result through the model unchanged, so any scorer can be queried
with a feature subset.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.special import expit

from .letor import Dataset, DocVector, QueryGroup

MASK_MODES = ("zero", "mean")


@dataclass(frozen=True)
class FeatureMask:
    """An explanation feature subset F' inside a universe of M features."""

    active: frozenset[int]
    universe_size: int

    def __post_init__(self) -> None:
        if self.universe_size < 1:
            raise ValueError("universe_size must be >= 1")
        bad = [i for i in self.active if not (0 <= i < self.universe_size)]
        if bad:
            raise ValueError(f"mask indices out of range [0, {self.universe_size}): {sorted(bad)}")

    @classmethod
    def of(cls, indices: Iterable[int], universe_size: int) -> "FeatureMask":
        return cls(frozenset(int(i) for i in indices), universe_size)

    @classmethod
    def full(cls, universe_size: int) -> "FeatureMask":
        return cls(frozenset(range(universe_size)), universe_size)

    @classmethod
    def empty(cls, universe_size: int) -> "FeatureMask":
        return cls(frozenset(), universe_size)

    def complement(self) -> "FeatureMask":
        rest = frozenset(range(self.universe_size)) - self.active
        return FeatureMask(rest, self.universe_size)

    def bool_array(self) -> np.ndarray:
        arr = np.zeros(self.universe_size, dtype=bool)
        if self.active:
            arr[sorted(self.active)] = True
        return arr

    def is_full(self) -> bool:
        return len(self.active) == self.universe_size


class MaskPolicy:
    """Substitution rule for masked-out features: zeros or background means."""

    def __init__(self, mode: str = "zero", background: np.ndarray | None = None):
        if mode not in MASK_MODES:
            raise ValueError(f"mask policy mode must be one of {MASK_MODES}, got {mode!r}")
        if mode == "mean" and background is None:
            raise ValueError("mask policy 'mean' requires a background means vector")
        self.mode = mode
        self.background = None if background is None else np.asarray(background, dtype=np.float64)

    def substitution_values(self, universe_size: int) -> np.ndarray:
        if self.mode == "zero":
            return np.zeros(universe_size, dtype=np.float64)
        assert self.background is not None
        if len(self.background) != universe_size:
            raise ValueError(
                f"background vector has {len(self.background)} entries, expected {universe_size}"
            )
        return self.background

    def substitute(self, X: np.ndarray, mask: FeatureMask) -> np.ndarray:
        """Replace inactive columns of X; active columns are untouched."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != mask.universe_size:
            raise ValueError(f"feature dimension {X.shape[1]} != mask universe {mask.universe_size}")
        if mask.is_full():
            return X
        out = np.tile(self.substitution_values(mask.universe_size), (X.shape[0], 1))
        if mask.active:
            cols = sorted(mask.active)
            out[:, cols] = X[:, cols]
        return out

    def __repr__(self) -> str:
        return f"MaskPolicy(mode={self.mode!r})"


class Ranking:
    """A strict ordering of one query's documents by descending score.

    Score ties are broken by ascending doc_index, so `order` is always a
    strict permutation of 0..n-1. `scores[d]` is the score of doc d.
    """

    def __init__(self, scores: np.ndarray):
        scores = np.asarray(scores, dtype=np.float64)
        if scores.ndim != 1 or len(scores) == 0:
            raise ValueError("scores must be a non-empty 1-D array")
        n = len(scores)
        order = np.lexsort((np.arange(n), -scores))
        self.scores = scores
        self.order = order
        self.scores.flags.writeable = False
        self.order.flags.writeable = False

    def __len__(self) -> int:
        return len(self.order)

    def positions(self) -> np.ndarray:
        """positions()[d] = rank position of doc d (0 = top)."""
        pos = np.empty(len(self.order), dtype=np.int64)
        pos[self.order] = np.arange(len(self.order))
        return pos

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Ranking) and np.array_equal(self.order, other.order) and np.array_equal(
            self.scores, other.scores
        )

    def __repr__(self) -> str:
        return f"Ranking(order={self.order.tolist()})"


class RankerModel:
    """Base scorer interface; subclasses are deterministic and immutable."""

    kind: str = "abstract"
    feature_count: int | None = None

    def score_query(self, X: np.ndarray) -> np.ndarray:
        """Scores for the documents of one query (rows of X)."""
        raise NotImplementedError

    def score_rows_in_context(self, rows: np.ndarray, context: np.ndarray, target_index: int) -> np.ndarray:
        """Score perturbed variants of one document of a query.

        Pointwise models ignore the context; listwise-style aggregation
        (the pairwise ranker) overrides this to score each row against the
        unperturbed remaining documents.
        """
        return self.score_query(rows)


class LinearRanker(RankerModel):
    kind = "pointwise-linear"

    def __init__(self, weights: np.ndarray):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.feature_count = len(self.weights)

    def score_query(self, X: np.ndarray) -> np.ndarray:
        return np.atleast_2d(X) @ self.weights


class PairwiseLogisticRanker(RankerModel):
    """Logistic preference model on feature differences.

    P(i beats j) = sigmoid(w . (x_i - x_j)). A document's score within a
    query is the mean concordance probability against every other document
    (Borda-style aggregation), which keeps scores symmetric and in [0, 1].
    """

    kind = "pairwise-logistic"

    def __init__(self, weights: np.ndarray):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.feature_count = len(self.weights)

    def pair_probability(self, x_i: np.ndarray, x_j: np.ndarray) -> float:
        return float(expit(self.weights @ (np.asarray(x_i) - np.asarray(x_j))))

    def score_query(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        n = X.shape[0]
        if n == 1:
            return np.array([0.5])
        margins = X @ self.weights
        probs = expit(margins[:, None] - margins[None, :])
        return (probs.sum(axis=1) - 0.5) / (n - 1)

    def score_rows_in_context(self, rows: np.ndarray, context: np.ndarray, target_index: int) -> np.ndarray:
        context = np.atleast_2d(context)
        n = context.shape[0]
        if n == 1:
            return np.full(np.atleast_2d(rows).shape[0], 0.5)
        others = np.delete(context, target_index, axis=0) @ self.weights
        margins = np.atleast_2d(rows) @ self.weights
        return expit(margins[:, None] - others[None, :]).mean(axis=1)


def masked_scores(model: RankerModel, X: np.ndarray, mask: FeatureMask, policy: MaskPolicy) -> np.ndarray:
    """Score a query's documents with inactive features substituted away."""
    return model.score_query(policy.substitute(X, mask))


def masked_score(model: RankerModel, doc: DocVector | np.ndarray, mask: FeatureMask, policy: MaskPolicy) -> float:
    features = doc.features if isinstance(doc, DocVector) else np.asarray(doc, dtype=np.float64)
    if len(features) != mask.universe_size:
        raise ValueError(f"document has {len(features)} features, mask universe is {mask.universe_size}")
    return float(masked_scores(model, features[None, :], mask, policy)[0])


def rank(model: RankerModel, query: QueryGroup, mask: FeatureMask, policy: MaskPolicy) -> Ranking:
    if len(query.docs) == 0:
        raise ValueError(f"query {query.qid!r} has no documents")
    return Ranking(masked_scores(model, query.features_matrix, mask, policy))


def full_ranking(model: RankerModel, query: QueryGroup, universe_size: int) -> Ranking:
    """The original ranking pi, i.e. rank() under the full feature set."""
    return rank(model, query, FeatureMask.full(universe_size), MaskPolicy("zero"))


def train_pointwise_linear(train: Dataset, l2: float = 0.0) -> LinearRanker:
    """Ridge least-squares fit of relevance labels on features (no intercept).

    Solves (X'X + l2*I) w = X'y. With l2=0 a rank-deficient design raises
    instead of silently picking a pseudo-inverse solution.
    """
    if l2 < 0:
        raise ValueError("l2 must be >= 0")
    X = train.all_features()
    y = np.concatenate([q.labels for q in train.queries]).astype(np.float64)
    gram = X.T @ X
    if l2 > 0:
        gram = gram + l2 * np.eye(X.shape[1])
    elif np.linalg.matrix_rank(gram) < X.shape[1]:
        raise ValueError("normal equations are singular; retrain with l2 > 0")
    try:
        w = np.linalg.solve(gram, X.T @ y)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"normal equations are singular ({exc}); retrain with l2 > 0") from None
    return LinearRanker(w)


def _label_pairs(labels: np.ndarray) -> list[tuple[int, int]]:
    n = len(labels)
    return [(i, j) for i in range(n) for j in range(n) if labels[i] > labels[j]]


def train_pairwise_logistic(
    train: Dataset,
    epochs: int = 5,
    learning_rate: float = 0.1,
    pair_sample_per_query: int | None = 100,
    seed: int = 0,
) -> PairwiseLogisticRanker:
    """SGD on the pairwise logistic loss over label-ordered document pairs.

    Pair extraction: for each query in dataset order, all (i, j) with
    label_i > label_j in row-scan order; queries with more pairs than
    `pair_sample_per_query` are subsampled without replacement. Each epoch
    shuffles the pooled pairs and applies plain sequential updates
    w += lr * (1 - sigmoid(w.d)) * d on the difference vector d = x_i - x_j.
    Weights start at zero; everything is deterministic given `seed`.
    """
    rng = np.random.default_rng(seed)
    diffs: list[np.ndarray] = []
    for query in train.queries:
        pairs = _label_pairs(query.labels)
        if not pairs:
            continue
        if pair_sample_per_query is not None and len(pairs) > pair_sample_per_query:
            keep = rng.choice(len(pairs), size=pair_sample_per_query, replace=False)
            pairs = [pairs[i] for i in keep]
        X = query.features_matrix
        diffs.extend(X[i] - X[j] for i, j in pairs)
    if not diffs:
        raise ValueError("no trainable pairs: every query has a single distinct label")
    D = np.vstack(diffs)
    w = np.zeros(D.shape[1])
    for _ in range(epochs):
        for idx in rng.permutation(len(D)):
            d = D[idx]
            w = w + learning_rate * (1.0 - expit(w @ d)) * d
    return PairwiseLogisticRanker(w)


def pairwise_logistic_loss(model: PairwiseLogisticRanker, diffs: np.ndarray) -> float:
    """Mean negative log-likelihood of the stored preference direction."""
    margins = np.atleast_2d(diffs) @ model.weights
    return float(np.mean(np.logaddexp(0.0, -margins)))


# -- model persistence (simple versioned JSON text dump) ---------------------

MODEL_SCHEMA = 1


def save_model(model: RankerModel, path: str | Path) -> None:
    from .gbdt import TreeEnsembleRanker
    from .synthetic import InteractionModel

    payload: dict = {"schema": MODEL_SCHEMA, "kind": model.kind}
    if isinstance(model, (LinearRanker, PairwiseLogisticRanker)):
        payload["weights"] = model.weights.tolist()
    elif isinstance(model, TreeEnsembleRanker):
        payload["base_value"] = model.base_value
        payload["learning_rate"] = model.learning_rate
        payload["trees"] = [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": t.value.tolist(),
            }
            for t in model.trees
        ]
    elif isinstance(model, InteractionModel):
        payload["weights"] = model.weights.tolist()
        payload["pair"] = list(model.pair)
        payload["pair_weight"] = model.pair_weight
    else:
        raise ValueError(f"model kind {model.kind!r} cannot be serialized")
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> RankerModel:
    from .gbdt import RegressionTree, TreeEnsembleRanker
    from .synthetic import InteractionModel

    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("schema") != MODEL_SCHEMA:
        raise ValueError(f"unsupported model schema {payload.get('schema')!r}")
    kind = payload.get("kind")
    if kind == "pointwise-linear":
        return LinearRanker(np.array(payload["weights"]))
    if kind == "pairwise-logistic":
        return PairwiseLogisticRanker(np.array(payload["weights"]))
    if kind == "tree-ensemble":
        trees = [
            RegressionTree(
                feature=np.array(t["feature"], dtype=np.int64),
                threshold=np.array(t["threshold"], dtype=np.float64),
                left=np.array(t["left"], dtype=np.int64),
                right=np.array(t["right"], dtype=np.int64),
                value=np.array(t["value"], dtype=np.float64),
            )
            for t in payload["trees"]
        ]
        return TreeEnsembleRanker(
            base_value=float(payload["base_value"]),
            trees=trees,
            learning_rate=float(payload["learning_rate"]),
        )
    if kind == "synthetic-interaction":
        return InteractionModel(
            weights=np.array(payload["weights"]),
            pair=tuple(payload["pair"]),  # type: ignore[arg-type]
            pair_weight=float(payload["pair_weight"]),
        )
    raise ValueError(f"unknown model kind {kind!r}")
