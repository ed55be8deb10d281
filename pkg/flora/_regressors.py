"""
Regressors over encoded configurations: random forests and an RBF Gaussian
process with marginal-likelihood grid selection of its hyper-parameters.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist
from sklearn.ensemble import RandomForestRegressor

from ._errors import ConfigError, SurfaceFitError

logger = logging.getLogger(__name__)

LENGTH_SCALE_GRID = np.geomspace(0.05, 2.0, 5)
SIGNAL_VAR_GRID = np.geomspace(0.01, 1.0, 5)
NOISE_VAR_GRID = np.geomspace(1e-6, 1e-2, 5)
_JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


@dataclass(frozen=True, eq=False)
class RfRegressor:
    """Bagged regression trees; the prediction is the mean over trees."""

    forest: RandomForestRegressor
    n_trees: int
    min_leaf: int
    max_features: float
    bootstrap: bool
    seed: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.forest.predict(np.atleast_2d(X))

    def tree_predictions(self, X: np.ndarray) -> np.ndarray:
        """Matrix of shape (n_trees, n_rows)."""
        X = np.atleast_2d(X)
        return np.stack([t.predict(X) for t in self.forest.estimators_])


def fit_rf(
    X: np.ndarray,
    y: np.ndarray,
    seed: int = 0,
    n_trees: int = 100,
    min_leaf: int = 2,
    bootstrap: bool = True,
    max_features: float = 1.0,
) -> RfRegressor:
    """
    Fit a random forest on encoded configurations.

    Raises:
        ConfigError: With fewer than two samples.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 2 or X.shape[0] != y.shape[0]:
        raise ConfigError(f"random forest needs >= 2 matching samples, got X {X.shape}, y {y.shape}")
    forest = RandomForestRegressor(
        n_estimators=n_trees,
        min_samples_leaf=min_leaf,
        max_features=max_features,
        bootstrap=bootstrap,
        random_state=seed,
        n_jobs=1,
    )
    forest.fit(X, y)
    return RfRegressor(forest, n_trees, min_leaf, max_features, bootstrap, seed)


@dataclass(frozen=True, eq=False)
class GpRegressor:
    """
    Zero-mean GP on centered targets with kernel
    ``signal_var * exp(-|x - x'|^2 / (2 * length_scale^2))``.

    ``chol`` is the lower Cholesky factor of ``K + (noise_var + jitter) I``.
    """

    length_scale: float
    signal_var: float
    noise_var: float
    X: np.ndarray
    y_mean: float
    alpha: np.ndarray
    chol: np.ndarray
    jitter: float
    log_marginal_likelihood: float

    def kernel(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        return _rbf(cdist(A, B, "sqeuclidean"), self.length_scale, self.signal_var)

    def predict(self, X: np.ndarray, return_std: bool = False):
        """
        Posterior mean (and standard deviation when ``return_std``) of the
        latent function; the variance is clamped at 0.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Ks = self.kernel(X, self.X)
        mean = self.y_mean + Ks @ self.alpha
        if not return_std:
            return mean
        v = solve_triangular(self.chol, Ks.T, lower=True, check_finite=False)
        var = np.maximum(self.signal_var - np.einsum("ij,ij->j", v, v), 0.0)
        return mean, np.sqrt(var)

    def predict_var(self, X: np.ndarray) -> np.ndarray:
        _, std = self.predict(X, return_std=True)
        return std * std


def _rbf(sqdist: np.ndarray, length_scale: float, signal_var: float) -> np.ndarray:
    return signal_var * np.exp(-sqdist / (2.0 * length_scale * length_scale))


def _factor(K: np.ndarray, noise_var: float) -> tuple[np.ndarray, float]:
    n = K.shape[0]
    if not np.isfinite(K).all():
        raise SurfaceFitError(f"kernel matrix has non-finite entries (n={n})")
    eye = np.eye(n)
    for jitter in _JITTERS:
        try:
            L = cholesky(K + (noise_var + jitter) * eye, lower=True, check_finite=False)
        except LinAlgError:
            logger.debug("cholesky failed with jitter %g, escalating", jitter)
            continue
        if np.isfinite(L).all():
            return L, jitter
    raise SurfaceFitError(
        f"kernel matrix not positive definite after jitter {_JITTERS[-1]:g} (n={n})"
    )


def _lml(L: np.ndarray, alpha: np.ndarray, yc: np.ndarray) -> float:
    n = yc.size
    return float(-0.5 * yc @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * math.log(2.0 * math.pi))


def fit_gp(
    X: np.ndarray,
    y: np.ndarray,
    length_scale: float | None = None,
    signal_var: float | None = None,
    noise_var: float | None = None,
) -> GpRegressor:
    """
    Fit a GP regressor.

    Hyper-parameters left as None are chosen by maximizing the log marginal
    likelihood over a 5-point log grid each (length scale in [0.05, 2],
    signal variance in [0.01, 1], noise variance in [1e-6, 1e-2]); ties keep
    the first grid point.

    Raises:
        ConfigError: Without samples or with a non-positive hyper-parameter.
        SurfaceFitError: If no candidate can be factorized.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 1 or X.shape[0] != y.shape[0]:
        raise ConfigError(f"GP needs >= 1 matching sample, got X {X.shape}, y {y.shape}")
    for label, value in (("length_scale", length_scale), ("signal_var", signal_var), ("noise_var", noise_var)):
        if value is not None and not value > 0:
            raise ConfigError(f"{label} must be > 0, got {value!r}")

    y_mean = float(y.mean())
    yc = y - y_mean
    sqdist = cdist(X, X, "sqeuclidean")
    grid = itertools.product(
        LENGTH_SCALE_GRID if length_scale is None else (length_scale,),
        SIGNAL_VAR_GRID if signal_var is None else (signal_var,),
        NOISE_VAR_GRID if noise_var is None else (noise_var,),
    )
    best: GpRegressor | None = None
    last_error: SurfaceFitError | None = None
    for ls, sv, nv in grid:
        try:
            L, jitter = _factor(_rbf(sqdist, ls, sv), nv)
        except SurfaceFitError as e:
            last_error = e
            continue
        alpha = cho_solve((L, True), yc, check_finite=False)
        lml = _lml(L, alpha, yc)
        if best is None or lml > best.log_marginal_likelihood:
            best = GpRegressor(float(ls), float(sv), float(nv), X, y_mean, alpha, L, jitter, lml)
    if best is None:
        raise last_error or SurfaceFitError("no GP hyper-parameters could be fitted")
    logger.debug(
        "GP fit on %d points: length_scale=%g signal_var=%g noise_var=%g lml=%.4f",
        X.shape[0], best.length_scale, best.signal_var, best.noise_var, best.log_marginal_likelihood,
    )
    return best
