"""Tests for the histogram GBDT: structure audits, metrics and cross-validation."""

import numpy as np
import pytest

import flora
from flora import DataError, Dataset, GbdtParams


def _planted(n=200, seed=0):
    return flora.make_synthetic(n_rows=n, n_features=3, noise=0.05, informative=2, seed=seed)


def test_training_loss_decreases_monotonically():
    """Every boosting round lowers (or keeps) the training log-loss."""
    model = flora.fit(GbdtParams(max_iter=30, learning_rate=0.1, min_samples_leaf=5), _planted())
    path = np.array(model.training_loss_path)
    assert len(path) == model.n_trees + 1
    assert np.all(np.diff(path) <= 1e-12)
    assert path[-1] < path[0]


@pytest.mark.parametrize("min_leaf", [1, 7, 25])
def test_min_samples_leaf_respected(min_leaf):
    """No leaf holds fewer training rows than min_samples_leaf."""
    model = flora.fit(GbdtParams(max_iter=10, min_samples_leaf=min_leaf), _planted())
    for tree in model.trees:
        leaves = tree.n_samples[tree.is_leaf]
        assert leaves.min() >= min_leaf
        assert leaves.sum() == 200


def test_max_leaf_nodes_respected():
    """Trees stop growing at max_leaf_nodes leaves."""
    model = flora.fit(GbdtParams(max_iter=5, min_samples_leaf=1), _planted())
    assert all(t.n_leaves <= 31 for t in model.trees)


def test_root_split_matches_brute_force():
    """On 50 rows and one feature the root split is the exhaustive-search optimum."""
    rng = np.random.default_rng(3)
    x = rng.normal(size=50)
    y = (x + rng.normal(scale=0.7, size=50) > 0).astype(int)
    data = Dataset(x.reshape(-1, 1), y)
    params = GbdtParams(max_iter=1, learning_rate=0.3, min_samples_leaf=5,
                        l2_regularization=1.0, max_leaf_nodes=2)
    tree = flora.fit(params, data).trees[0]

    n1 = y.sum()
    p = n1 / 50
    g = p - y
    h = np.full(50, p * (1 - p))
    distinct = np.unique(x)
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    best_gain, best_mid = -np.inf, None
    for m in mids:
        left = x <= m
        if left.sum() < 5 or (~left).sum() < 5:
            continue
        gain = (g[left].sum() ** 2 / (h[left].sum() + 1.0)
                + g[~left].sum() ** 2 / (h[~left].sum() + 1.0)
                - g.sum() ** 2 / (h.sum() + 1.0))
        if gain > best_gain:
            best_gain, best_mid = gain, m

    assert tree.feature[0] == 0
    assert tree.threshold[0] == best_mid
    assert tree.gain[0] == pytest.approx(best_gain, rel=1e-9)
    assert np.all(tree.gain[tree.is_leaf] == 0.0)
    left = x <= best_mid
    expected_left = -0.3 * g[left].sum() / (h[left].sum() + 1.0)
    assert tree.value[tree.left[0]] == pytest.approx(expected_left, rel=1e-9)


def test_fit_is_deterministic():
    """The same parameters and data give identical models."""
    data = _planted()
    params = GbdtParams(max_iter=15, learning_rate=0.2, min_samples_leaf=3)
    a = flora.fit(params, data).decision_function(data.features)
    b = flora.fit(params, data).decision_function(data.features)
    assert np.array_equal(a, b)


def test_predict_proba_in_unit_interval():
    data = _planted()
    model = flora.fit(GbdtParams(max_iter=10), data)
    proba = flora.predict_proba(model, data.features)
    assert proba.shape == (200,)
    assert np.all((proba >= 0) & (proba <= 1))
    assert set(np.unique(model.predict(data.features))) <= {0, 1}


def test_single_class_labels_raise():
    """One-class training data is rejected."""
    data = Dataset(np.arange(10.0).reshape(-1, 1), np.ones(10, dtype=int))
    with pytest.raises(DataError, match="degenerate labels"):
        flora.fit(GbdtParams(), data)


def test_feature_count_mismatch_raises():
    """Prediction needs the training feature count."""
    data = _planted()
    model = flora.fit(GbdtParams(max_iter=2), data)
    with pytest.raises(DataError, match="features"):
        model.decision_function(np.zeros((4, 5)))


def test_constant_features_give_base_rate_model():
    """Without usable splits the model predicts the base rate."""
    X = np.ones((40, 2))
    y = np.array([0, 1] * 20)
    model = flora.fit(GbdtParams(max_iter=5, min_samples_leaf=1), Dataset(X, y))
    assert model.n_trees == 0
    assert np.allclose(model.predict_proba(X), 0.5)


@pytest.mark.parametrize("y_true,y_pred,expected", [
    ([0, 0, 1, 1], [0, 0, 1, 1], 1.0),
    ([0, 0, 1, 1], [1, 1, 0, 0], 0.0),
    ([0, 0, 0, 1], [0, 0, 0, 0], 0.5),
    ([0, 0, 1, 1, 1, 1], [0, 1, 1, 1, 1, 0], 0.625),
])
def test_balanced_accuracy(y_true, y_pred, expected):
    assert flora.balanced_accuracy(np.array(y_true), np.array(y_pred)) == pytest.approx(expected, abs=1e-12)


def test_cv_loss_in_unit_interval_and_deterministic():
    """CV loss is a fixed number in [0, 1] for a fold seed."""
    data = _planted(150)
    params = GbdtParams(max_iter=10, min_samples_leaf=5)
    loss = flora.cv_loss(params, data, k=3, seed=7)
    assert 0.0 <= loss <= 1.0
    assert loss == flora.cv_loss(params, data, k=3, seed=7)
    assert loss < 0.3


@pytest.mark.slow
def test_cv_loss_on_coin_flip_labels_is_chance():
    """Labels independent of the features cannot be learned: loss stays near 0.5."""
    rng = np.random.default_rng(21)
    data = Dataset(rng.normal(size=(2000, 4)), rng.integers(0, 2, size=2000), name="coin")
    loss = flora.cv_loss(GbdtParams(max_iter=30), data, k=5, seed=3)
    assert abs(loss - 0.5) <= 0.05


def test_cv_loss_too_few_rows_per_class():
    """k larger than the smallest class is rejected with the usable k."""
    data = Dataset(np.arange(12.0).reshape(-1, 1), np.array([0] * 9 + [1] * 3))
    with pytest.raises(DataError, match="use k <= 3"):
        flora.cv_loss(GbdtParams(max_iter=2), data, k=5)


def test_holdout_accuracy():
    """Holdout accuracy trains on one set and scores the other."""
    train, test = _planted(200, seed=1), _planted(100, seed=2)
    acc = flora.holdout_accuracy(GbdtParams(max_iter=20, min_samples_leaf=5), train, test)
    assert 0.7 < acc <= 1.0


@pytest.mark.parametrize("kwargs", [
    {"max_iter": 0},
    {"learning_rate": 0.0},
    {"min_samples_leaf": 0},
    {"l2_regularization": -1.0},
    {"max_bins": 300},
    {"max_leaf_nodes": 1},
])
def test_invalid_params_raise(kwargs):
    """Out-of-range hyper-parameters raise ConfigError."""
    with pytest.raises(flora.ConfigError):
        GbdtParams(**kwargs)


def test_params_from_config_ignores_unknown_keys():
    params = GbdtParams.from_config(flora.BASELINE_CONFIG)
    assert params == GbdtParams(100, 0.1, 20, 0.0)
    assert GbdtParams.from_config({"max_iter": 5, "other": 1}).max_iter == 5
