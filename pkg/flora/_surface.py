"""
Unified loss surfaces built by the aggregator from the parties' trial logs.

Four constructions are supported:

- ``SGM``: one random forest on the merged trials of all parties.
- ``SGM_U``: one GP on the merged trials, evaluated as mean + alpha * std.
- ``MPLM``: one regressor per party, combined by the maximum.
- ``APLM``: one regressor per party, combined by the mean.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Any, Mapping, Protocol, Sequence

import numpy as np

from ._errors import ConfigError, DataError
from ._local_hpo import TrialLog, merge_logs, run_gp_ei, run_random_search
from ._regressors import GpRegressor, RfRegressor, fit_gp, fit_rf
from ._space import HpConfig, HpSpace

logger = logging.getLogger(__name__)

DEFAULT_MINIMIZE_BUDGET = 2000


class SurfaceKind(enum.Enum):
    SGM = "sgm"
    SGM_U = "sgm-u"
    MPLM = "mplm"
    APLM = "aplm"

    @classmethod
    def parse(cls, text: "str | SurfaceKind") -> "SurfaceKind":
        """Accept ``sgm``, ``sgm-u``/``sgm_u``/``sgm+u``, ``mplm``, ``aplm`` in any case."""
        if isinstance(text, SurfaceKind):
            return text
        key = str(text).strip().lower().replace("_", "-").replace("+", "-")
        for kind in cls:
            if kind.value == key:
                return kind
        raise ConfigError(
            f"unknown surface kind {text!r}; expected one of {[k.value for k in cls]}"
        )

    @property
    def per_party(self) -> bool:
        return self in (SurfaceKind.MPLM, SurfaceKind.APLM)


ALL_SURFACES = tuple(SurfaceKind)

Regressor = RfRegressor | GpRegressor


class _Evaluable(Protocol):
    def evaluate(self, config: Mapping[str, Any]) -> float: ...


@dataclass(frozen=True, eq=False)
class Surface:
    """
    A fitted loss surface; evaluation is pure.

    ``global_model`` is set for SGM/SGM_U, ``party_models`` (in party id
    order) for MPLM/APLM.
    """

    kind: SurfaceKind
    space: HpSpace
    global_model: Regressor | None = None
    party_models: tuple[Regressor, ...] = ()
    party_ids: tuple[str, ...] = ()
    alpha: float = 1.0

    def __post_init__(self) -> None:
        if self.kind.per_party:
            if self.global_model is not None or not self.party_models:
                raise ConfigError(f"{self.kind.value} surface needs party models only")
        else:
            if self.global_model is None or self.party_models:
                raise ConfigError(f"{self.kind.value} surface needs exactly a global model")
            if self.kind is SurfaceKind.SGM_U and not isinstance(self.global_model, GpRegressor):
                raise ConfigError("sgm-u surface needs a GP global model")

    @property
    def n_parties(self) -> int:
        return len(self.party_models) if self.kind.per_party else 0

    def party_predictions(self, X: np.ndarray) -> np.ndarray:
        """Matrix of shape (p, n_rows)."""
        X = np.atleast_2d(X)
        return np.stack([m.predict(X) for m in self.party_models])

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        """Surface values at encoded rows ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.space.dim:
            raise ConfigError(f"expected {self.space.dim} encoded columns, got {X.shape[1]}")
        if self.kind is SurfaceKind.SGM:
            return self.global_model.predict(X)
        if self.kind is SurfaceKind.SGM_U:
            mean, std = self.global_model.predict(X, return_std=True)
            return mean + self.alpha * std
        preds = self.party_predictions(X)
        if self.kind is SurfaceKind.MPLM:
            return preds.max(axis=0)
        # summing sorted predictions makes the mean independent of party order
        mean = np.sort(preds, axis=0).sum(axis=0) / preds.shape[0]
        return np.clip(mean, preds.min(axis=0), preds.max(axis=0))

    def evaluate(self, config: Mapping[str, Any]) -> float:
        """
        Surface value at one configuration.

        Raises:
            ConfigError: If the configuration is invalid for the space.
        """
        problems = self.space.validate(config)
        if problems:
            raise ConfigError("; ".join(problems))
        return float(self.evaluate_many(self.space.encode(config)[None, :])[0])


def _fit_regressor(kind: str, X: np.ndarray, y: np.ndarray, seed: int) -> Regressor:
    if kind == "rf":
        return fit_rf(X, y, seed=seed)
    if kind == "gp":
        return fit_gp(X, y)
    raise ConfigError(f"party regressor must be 'rf' or 'gp', got {kind!r}")


def _standardize(y: np.ndarray) -> np.ndarray:
    std = float(y.std())
    return (y - y.mean()) / (std if std > 0 else 1.0)


def build_surface(
    kind: SurfaceKind | str,
    logs: Sequence[TrialLog],
    space: HpSpace,
    alpha: float = 1.0,
    seed: int = 0,
    party_regressor: str = "rf",
    standardize_parties: bool = False,
) -> Surface:
    """
    Fit a loss surface on the parties' trial logs.

    Logs are ordered by party id before use, so the result does not depend on
    the order in which they were collected. Every random forest (the merged
    one and each party's) is fitted with ``seed``.

    Args:
        kind: Surface construction.
        logs: One non-empty log per party.
        space: Space the logged configurations belong to.
        alpha: Weight of the GP standard deviation for SGM_U (>= 0).
        seed: Random forest seed.
        party_regressor: ``"rf"`` or ``"gp"`` for MPLM/APLM party models.
        standardize_parties: Z-score each party's losses before fitting.

    Raises:
        ConfigError: On an unknown kind, negative alpha, or too few trials.
        DataError: If there are no logs or a log is empty.
        SurfaceFitError: If a GP cannot be fitted.
    """
    kind = SurfaceKind.parse(kind)
    if not logs:
        raise DataError("no trial logs to build a surface from")
    for log in logs:
        if len(log) == 0:
            raise DataError(f"trial log of {log.party_id} is empty")
    ids = [log.party_id for log in logs]
    if len(set(ids)) != len(ids):
        raise DataError(f"duplicate party ids: {ids}")
    if kind is SurfaceKind.SGM_U and not alpha >= 0:
        raise ConfigError(f"alpha must be >= 0, got {alpha!r}")
    ordered = sorted(logs, key=lambda lg: lg.party_id)

    def transform(y: np.ndarray) -> np.ndarray:
        return _standardize(y) if standardize_parties else y

    if kind.per_party:
        models = []
        for log in ordered:
            X = space.encode_many(log.configs)
            models.append(_fit_regressor(party_regressor, X, transform(log.losses), seed))
        surface = Surface(kind, space, party_models=tuple(models),
                          party_ids=tuple(lg.party_id for lg in ordered), alpha=alpha)
    else:
        trials = merge_logs(ordered)
        X = space.encode_many([t.config for t in trials])
        y = np.concatenate([transform(lg.losses) for lg in ordered])
        model = fit_rf(X, y, seed=seed) if kind is SurfaceKind.SGM else fit_gp(X, y)
        surface = Surface(kind, space, global_model=model,
                          party_ids=tuple(lg.party_id for lg in ordered), alpha=alpha)
    logger.info("built %s surface from %d parties, %d trials",
                kind.value, len(ordered), sum(len(lg) for lg in ordered))
    return surface


def minimize_surface(
    surface: _Evaluable,
    space: HpSpace,
    budget: int = DEFAULT_MINIMIZE_BUDGET,
    seed: int = 0,
    n_init: int = 10,
    n_cand: int = 256,
) -> HpConfig:
    """
    Approximate argmin of a surface with the GP-EI engine.

    Budgets not larger than ``n_init`` are spent on uniform samples only.
    The earliest of equally good trials is returned.

    Raises:
        ConfigError: If budget < 1.
    """
    if budget < 1:
        raise ConfigError(f"minimize budget must be >= 1, got {budget}")
    rng = np.random.default_rng(seed)
    if budget <= n_init:
        log = run_random_search(space, surface.evaluate, budget, rng, party_id="aggregator")
    else:
        log = run_gp_ei(space, surface.evaluate, budget, rng, n_init=n_init,
                        n_cand=n_cand, party_id="aggregator")
    best = log.best_trial()
    logger.info("surface minimum %.6f at %r", best.loss, best.config)
    return best.config
