"""
Histogram gradient-boosted decision trees for binary classification.

Second-order boosting on the logistic loss: features are binned once (at
most 255 bins), each tree is grown leaf-wise up to ``max_leaf_nodes`` by
picking the split with the largest gain

    G_L^2 / (H_L + l2) + G_R^2 / (H_R + l2) - G^2 / (H + l2)

and every leaf predicts ``-learning_rate * G / (H + l2)``. Only the four
searched hyper-parameters are exposed; the remaining internals are fixed.
"""
from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy.special import expit
from sklearn.metrics import balanced_accuracy_score
from sklearn.model_selection import StratifiedKFold

from ._data import Dataset
from ._errors import ConfigError, DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GbdtParams:
    """Tuned hyper-parameters plus the fixed internals."""

    max_iter: int = 100
    learning_rate: float = 0.1
    min_samples_leaf: int = 20
    l2_regularization: float = 0.0
    max_bins: int = 255
    max_leaf_nodes: int = 31

    def __post_init__(self) -> None:
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigError(f"max_iter must be a positive integer, got {self.max_iter!r}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate!r}")
        if int(self.min_samples_leaf) != self.min_samples_leaf or self.min_samples_leaf < 1:
            raise ConfigError(f"min_samples_leaf must be a positive integer, got {self.min_samples_leaf!r}")
        if not self.l2_regularization >= 0:
            raise ConfigError(f"l2_regularization must be >= 0, got {self.l2_regularization!r}")
        if not 2 <= self.max_bins <= 255:
            raise ConfigError("max_bins must be in [2, 255]")
        if self.max_leaf_nodes < 2:
            raise ConfigError("max_leaf_nodes must be >= 2")
        object.__setattr__(self, "max_iter", int(self.max_iter))
        object.__setattr__(self, "min_samples_leaf", int(self.min_samples_leaf))
        object.__setattr__(self, "learning_rate", float(self.learning_rate))
        object.__setattr__(self, "l2_regularization", float(self.l2_regularization))

    @classmethod
    def from_config(cls, config: Mapping[str, Any], **internals: Any) -> "GbdtParams":
        """Take the tuned values from a configuration; other keys are ignored."""
        tuned = {k: config[k] for k in ("max_iter", "learning_rate", "min_samples_leaf", "l2_regularization") if k in config}
        return cls(**tuned, **internals)


@dataclass(frozen=True, eq=False)
class RegressionTree:
    """
    Flat binary tree. Internal nodes send a row left when
    ``x[feature] <= threshold``; leaves have ``feature == -1`` and gain 0.
    """

    feature: np.ndarray
    threshold: np.ndarray
    gain: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    @property
    def n_leaves(self) -> int:
        return int(self.is_leaf.sum())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row."""
        node = np.zeros(X.shape[0], dtype=np.intp)
        while True:
            f = self.feature[node]
            active = np.flatnonzero(f >= 0)
            if active.size == 0:
                return node
            cur = node[active]
            go_left = X[active, f[active]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


@dataclass(frozen=True, eq=False)
class GbdtModel:
    """A fitted ensemble; immutable and safe to share across threads."""

    trees: tuple[RegressionTree, ...]
    bin_thresholds: tuple[np.ndarray, ...]
    base_score: float
    n_features: int
    training_loss_path: tuple[float, ...] = field(default=())

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def decision_function(self, features: np.ndarray) -> np.ndarray:
        X = np.asarray(features, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataError(
                f"model was trained on {self.n_features} features, got shape {X.shape}"
            )
        raw = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            raw += tree.predict(X)
        return raw

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        """Probability of class 1 for every row."""
        return expit(self.decision_function(features))

    def predict(self, features: np.ndarray) -> np.ndarray:
        return (self.predict_proba(features) >= 0.5).astype(np.int64)


def _bin_thresholds(column: np.ndarray, max_bins: int) -> np.ndarray:
    distinct = np.unique(column)
    if distinct.size <= max_bins:
        return (distinct[:-1] + distinct[1:]) / 2.0
    cuts = np.percentile(column, np.linspace(0, 100, max_bins + 1)[1:-1], method="midpoint")
    return np.unique(cuts)


def _bin(X: np.ndarray, thresholds: tuple[np.ndarray, ...]) -> np.ndarray:
    binned = np.empty(X.shape, dtype=np.intp)
    for j, t in enumerate(thresholds):
        binned[:, j] = np.searchsorted(t, X[:, j], side="left")
    return binned


def _leaf_score(G: np.ndarray | float, H: np.ndarray | float, l2: float) -> np.ndarray:
    denom = np.asarray(H, dtype=float) + l2
    G = np.asarray(G, dtype=float)
    return np.divide(G * G, denom, out=np.zeros(np.broadcast(G, denom).shape), where=denom > 0)


@dataclass(order=True)
class _Candidate:
    sort_key: tuple[float, int]
    node: int = field(compare=False)
    feature: int = field(compare=False)
    bin: int = field(compare=False)
    gain: float = field(compare=False)


class _TreeGrower:
    """Leaf-wise growth of a single tree on pre-binned features."""

    def __init__(
        self,
        binned: np.ndarray,
        n_bins: int,
        thresholds: tuple[np.ndarray, ...],
        grad: np.ndarray,
        hess: np.ndarray,
        params: GbdtParams,
    ) -> None:
        self.binned = binned
        self.n_bins = n_bins
        self.thresholds = thresholds
        self.grad = grad
        self.hess = hess
        self.params = params
        self.n_features = binned.shape[1]
        self._offsets = np.arange(self.n_features, dtype=np.intp) * n_bins

        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.gain: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.grad_sum: list[float] = []
        self.hess_sum: list[float] = []
        self.rows: list[np.ndarray] = []

    def _new_node(self, rows: np.ndarray) -> int:
        self.feature.append(-1)
        self.threshold.append(np.nan)
        self.gain.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.grad_sum.append(float(self.grad[rows].sum()))
        self.hess_sum.append(float(self.hess[rows].sum()))
        self.rows.append(rows)
        return len(self.feature) - 1

    def _histograms(self, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        d, nb = self.n_features, self.n_bins
        flat = (self.binned[rows] + self._offsets).ravel()
        size = d * nb
        G = np.bincount(flat, weights=np.repeat(self.grad[rows], d), minlength=size)
        H = np.bincount(flat, weights=np.repeat(self.hess[rows], d), minlength=size)
        C = np.bincount(flat, minlength=size)
        return G.reshape(d, nb), H.reshape(d, nb), C.reshape(d, nb)

    def _best_split(self, node: int) -> _Candidate | None:
        rows = self.rows[node]
        min_leaf = self.params.min_samples_leaf
        if rows.size < 2 * min_leaf or self.n_bins < 2:
            return None
        l2 = self.params.l2_regularization
        G, H, C = self._histograms(rows)
        G_tot, H_tot, n_tot = self.grad_sum[node], self.hess_sum[node], rows.size
        GL = np.cumsum(G, axis=1)[:, :-1]
        HL = np.cumsum(H, axis=1)[:, :-1]
        CL = np.cumsum(C, axis=1)[:, :-1]
        GR, HR, CR = G_tot - GL, H_tot - HL, n_tot - CL
        gain = _leaf_score(GL, HL, l2) + _leaf_score(GR, HR, l2) - _leaf_score(G_tot, H_tot, l2)
        gain = np.where((CL >= min_leaf) & (CR >= min_leaf), gain, -np.inf)
        flat = int(np.argmax(gain))
        best = float(gain.flat[flat])
        if not best > 0.0:
            return None
        feature, b = divmod(flat, gain.shape[1])
        return _Candidate((-best, node), node, feature, b, best)

    def grow(self) -> RegressionTree:
        root = self._new_node(np.arange(self.binned.shape[0], dtype=np.intp))
        heap: list[_Candidate] = []
        cand = self._best_split(root)
        if cand is not None:
            heapq.heappush(heap, cand)
        n_leaves = 1
        while heap and n_leaves < self.params.max_leaf_nodes:
            c = heapq.heappop(heap)
            rows = self.rows[c.node]
            go_left = self.binned[rows, c.feature] <= c.bin
            left = self._new_node(rows[go_left])
            right = self._new_node(rows[~go_left])
            self.feature[c.node] = c.feature
            self.gain[c.node] = c.gain
            self.threshold[c.node] = float(self.thresholds[c.feature][c.bin])
            self.left[c.node] = left
            self.right[c.node] = right
            n_leaves += 1
            for child in (left, right):
                nxt = self._best_split(child)
                if nxt is not None:
                    heapq.heappush(heap, nxt)

        l2, lr = self.params.l2_regularization, self.params.learning_rate
        feature = np.array(self.feature, dtype=np.intp)
        value = np.zeros(len(feature))
        for i in np.flatnonzero(feature < 0):
            h = self.hess_sum[i] + l2
            value[i] = -lr * self.grad_sum[i] / h if h > 0 else 0.0
        return RegressionTree(
            feature=feature,
            threshold=np.array(self.threshold),
            gain=np.array(self.gain),
            left=np.array(self.left, dtype=np.intp),
            right=np.array(self.right, dtype=np.intp),
            value=value,
            n_samples=np.array([r.size for r in self.rows], dtype=np.intp),
        )

    def leaf_rows(self) -> list[tuple[int, np.ndarray]]:
        return [(i, self.rows[i]) for i, f in enumerate(self.feature) if f < 0]


def _log_loss(y: np.ndarray, raw: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, raw) - y * raw))


def fit(params: GbdtParams, train: Dataset) -> GbdtModel:
    """
    Train a boosted ensemble.

    The result depends only on (params, train): ties between splits go to
    the lowest feature index and then the lowest bin. Boosting stops before
    ``max_iter`` only when a round leaves the training loss exactly
    unchanged (a single leaf with value 0).

    Args:
        params: Hyper-parameters.
        train: Training data containing both classes.

    Returns:
        The fitted model.

    Raises:
        DataError: If the training labels hold a single class.
    """
    n0, n1 = train.class_counts()
    if n0 == 0 or n1 == 0:
        raise DataError(f"{train.name}: degenerate labels (single class in {train.n_rows} rows)")
    X, y = train.features, train.labels.astype(np.float64)
    thresholds = tuple(_bin_thresholds(X[:, j], params.max_bins) for j in range(X.shape[1]))
    binned = _bin(X, thresholds)
    n_bins = max(t.size for t in thresholds) + 1 if thresholds else 1

    base = float(np.log(n1 / n0))
    raw = np.full(train.n_rows, base)
    trees = []
    path = [_log_loss(y, raw)]
    for _ in range(params.max_iter):
        p = expit(raw)
        grad = p - y
        hess = p * (1.0 - p)
        grower = _TreeGrower(binned, n_bins, thresholds, grad, hess, params)
        tree = grower.grow()
        if tree.n_leaves == 1 and tree.value[0] == 0.0:
            break
        for leaf, rows in grower.leaf_rows():
            raw[rows] += tree.value[leaf]
        trees.append(tree)
        path.append(_log_loss(y, raw))
    logger.debug("fitted %d trees on %s (final log-loss %.6f)", len(trees), train.name, path[-1])
    return GbdtModel(tuple(trees), thresholds, base, X.shape[1], tuple(path))


def predict_proba(model: GbdtModel, features: np.ndarray) -> np.ndarray:
    """Probabilities ``sigmoid(base_score + sum of tree outputs)``."""
    return model.predict_proba(features)


def balanced_accuracy(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """
    Mean of the two per-class recalls.

    Raises:
        DataError: On length mismatch or when y_true holds a single class.
    """
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise DataError(f"y_true has shape {y_true.shape}, y_pred {y_pred.shape}")
    if np.unique(y_true).size < 2:
        raise DataError("balanced accuracy needs both classes in y_true")
    return float(balanced_accuracy_score(y_true, y_pred))


def cv_loss(params: GbdtParams, data: Dataset, k: int = 10, seed: int = 0) -> float:
    """
    ``1 - mean balanced accuracy`` over k stratified, seed-shuffled folds.

    Raises:
        DataError: If a class has fewer than k rows.
    """
    if k < 2:
        raise ConfigError(f"cv needs at least 2 folds, got {k}")
    smallest = min(data.class_counts())
    if smallest < k:
        raise DataError(
            f"{data.name}: smallest class has {smallest} rows, too few for {k}-fold CV; "
            f"use k <= {smallest}"
        )
    folds = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    scores = []
    for train_idx, test_idx in folds.split(data.features, data.labels):
        model = fit(params, data.take(train_idx))
        scores.append(balanced_accuracy(data.labels[test_idx], model.predict(data.features[test_idx])))
    return 1.0 - float(np.mean(scores))


def holdout_accuracy(params: GbdtParams, train: Dataset, test: Dataset) -> float:
    """Balanced accuracy on ``test`` of a model fitted on ``train``."""
    model = fit(params, train)
    return balanced_accuracy(test.labels, model.predict(test.features))
