"""Tests for the random-forest and Gaussian-process regressors."""

import numpy as np
import pytest

import flora
from flora import ConfigError, SurfaceFitError


def _dense_posterior(X, y, Xs, ls, sv, nv):
    """Posterior mean and variance by direct solves, no Cholesky."""
    def k(A, B):
        d = ((A[:, None, :] - B[None, :, :]) ** 2).sum(-1)
        return sv * np.exp(-d / (2 * ls * ls))

    m = y.mean()
    K = k(X, X) + nv * np.eye(len(X))
    Ks = k(Xs, X)
    mean = m + Ks @ np.linalg.solve(K, y - m)
    var = sv - np.einsum("ij,ji->i", Ks, np.linalg.solve(K, Ks.T))
    return mean, np.maximum(var, 0.0)


def test_gp_matches_dense_solve_oracle():
    """Randomized small instances: posterior mean and variance agree to 1e-8."""
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 21))
        X = rng.random((n, 4))
        y = rng.random(n)
        Xs = rng.random((5, 4))
        ls = float(rng.uniform(0.2, 1.5))
        sv = float(rng.uniform(0.1, 1.0))
        nv = float(rng.uniform(1e-3, 1e-1))
        gp = flora.fit_gp(X, y, length_scale=ls, signal_var=sv, noise_var=nv)
        mean, std = gp.predict(Xs, return_std=True)
        mean_o, var_o = _dense_posterior(X, y, Xs, ls, sv, nv)
        worst = max(worst, np.abs(mean - mean_o).max(), np.abs(std ** 2 - var_o).max())
    assert worst <= 1e-8


def test_gp_three_points_fixed_hypers():
    """Posterior mean and variance against a dense solve."""
    X = np.array([[0.1, 0.2, 0.3, 0.4], [0.5, 0.5, 0.5, 0.5], [0.9, 0.1, 0.7, 0.3]])
    y = np.array([0.3, 0.1, 0.25])
    probes = np.random.default_rng(4).random((5, 4))
    gp = flora.fit_gp(X, y, length_scale=0.5, signal_var=0.2, noise_var=1e-4)
    mean, std = gp.predict(probes, return_std=True)
    mean_o, var_o = _dense_posterior(X, y, probes, 0.5, 0.2, 1e-4)
    assert np.allclose(mean, mean_o, atol=1e-8)
    assert np.allclose(std ** 2, var_o, atol=1e-8)


def test_gp_interpolates_with_tiny_noise():
    """With negligible noise the GP passes through its data."""
    X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    y = np.array([0.2, 0.6, 0.4])
    gp = flora.fit_gp(X, y, length_scale=0.5, signal_var=1.0, noise_var=1e-10)
    mean, std = gp.predict(X, return_std=True)
    assert np.allclose(mean, y, atol=1e-6)
    assert np.all(std < 1e-3)


def test_gp_reverts_to_mean_far_from_data():
    """Far from the data the GP predicts the training mean with full variance."""
    X = np.array([[0.0], [0.1]])
    y = np.array([0.2, 0.4])
    gp = flora.fit_gp(X, y, length_scale=0.05, signal_var=0.5, noise_var=1e-6)
    mean, std = gp.predict(np.array([[100.0]]), return_std=True)
    assert mean[0] == pytest.approx(0.3, abs=1e-12)
    assert std[0] ** 2 == pytest.approx(0.5, abs=1e-12)


def test_gp_grid_selection_picks_grid_values():
    """Selected hyper-parameters come from the search grid."""
    rng = np.random.default_rng(1)
    X = rng.random((15, 4))
    y = np.sin(3 * X[:, 0]) + 0.01 * rng.normal(size=15)
    gp = flora.fit_gp(X, y)
    assert gp.length_scale in set(flora._regressors.LENGTH_SCALE_GRID)
    assert gp.signal_var in set(flora._regressors.SIGNAL_VAR_GRID)
    assert gp.noise_var in set(flora._regressors.NOISE_VAR_GRID)
    again = flora.fit_gp(X, y)
    assert again.log_marginal_likelihood == gp.log_marginal_likelihood


def test_gp_variance_never_negative():
    """Predicted standard deviations are never negative."""
    rng = np.random.default_rng(2)
    X = rng.random((20, 4))
    gp = flora.fit_gp(X, rng.random(20), length_scale=2.0, signal_var=1.0, noise_var=1e-6)
    assert np.all(gp.predict_var(np.vstack([X, rng.random((50, 4))])) >= 0.0)


def test_gp_duplicate_points_factorize():
    """Repeated inputs still give a valid factorization."""
    X = np.zeros((6, 4))
    gp = flora.fit_gp(X, np.linspace(0, 1, 6), noise_var=1e-6)
    assert np.isfinite(gp.predict(X)).all()


@pytest.mark.parametrize("kwargs", [
    {"length_scale": 0.0},
    {"signal_var": -1.0},
    {"noise_var": 0.0},
])
def test_gp_rejects_non_positive_hypers(kwargs):
    """Hyper-parameters must be positive."""
    with pytest.raises(ConfigError):
        flora.fit_gp(np.zeros((2, 1)), np.zeros(2), **kwargs)


def test_gp_requires_samples():
    with pytest.raises(ConfigError):
        flora.fit_gp(np.zeros((0, 4)), np.zeros(0))


def test_gp_non_finite_kernel_raises():
    """A kernel that cannot be factorized raises SurfaceFitError."""
    X = np.array([[0.0], [1.0]])
    y = np.array([0.0, 1.0])
    with pytest.raises(SurfaceFitError):
        flora.fit_gp(X, y, length_scale=1.0, signal_var=np.inf, noise_var=1e-6)


def test_rf_constant_targets():
    """A forest on constant targets predicts the constant."""
    rng = np.random.default_rng(0)
    rf = flora.fit_rf(rng.random((30, 4)), np.full(30, 0.3), seed=1)
    assert np.allclose(rf.predict(rng.random((10, 4))), 0.3)


def test_rf_fits_step_function():
    """A forest recovers a one-dimensional step."""
    x = np.linspace(0, 1, 200).reshape(-1, 1)
    y = (x[:, 0] > 0.5).astype(float)
    rf = flora.fit_rf(x, y, seed=0, min_leaf=1)
    mse = np.mean((rf.predict(x) - y) ** 2)
    assert mse <= 0.01 * y.var()


def test_rf_interpolates_without_bootstrap():
    X = np.array([[0.1], [0.1], [0.5], [0.9]])
    y = np.array([0.2, 0.2, 0.7, 0.4])
    rf = flora.fit_rf(X, y, seed=0, min_leaf=1, bootstrap=False)
    assert np.allclose(rf.predict(X), y)


def test_rf_prediction_between_tree_extremes():
    """Forest predictions lie between the lowest and highest tree."""
    rng = np.random.default_rng(5)
    X, y = rng.random((40, 4)), rng.random(40)
    rf = flora.fit_rf(X, y, seed=3)
    probes = rng.random((100, 4))
    trees = rf.tree_predictions(probes)
    pred = rf.predict(probes)
    assert trees.shape == (100, 100)
    assert np.all(trees.min(0) - 1e-12 <= pred) and np.all(pred <= trees.max(0) + 1e-12)
    assert np.allclose(pred, trees.mean(0))


def test_rf_deterministic_per_seed():
    """Equal seeds give equal forests."""
    rng = np.random.default_rng(6)
    X, y = rng.random((40, 4)), rng.random(40)
    probes = rng.random((10, 4))
    assert np.array_equal(flora.fit_rf(X, y, seed=2).predict(probes), flora.fit_rf(X, y, seed=2).predict(probes))


def test_rf_needs_two_samples():
    with pytest.raises(ConfigError, match=">= 2"):
        flora.fit_rf(np.zeros((1, 4)), np.zeros(1))
