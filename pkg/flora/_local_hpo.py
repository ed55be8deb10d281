"""
Per-party HPO engines producing trial logs.

A party evaluates configurations on its own shard and records every realized
(configuration, loss) pair. Logs depend only on the objective, the seed and
the trial count, never on other parties.
"""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import pandas as pd
from scipy.stats import norm

from ._errors import ConfigError, DataError, ObjectiveError, SurfaceFitError
from ._regressors import GpRegressor, fit_gp
from ._space import HpConfig, HpSpace

logger = logging.getLogger(__name__)

Objective = Callable[[HpConfig], float]

MAX_RETRIES = 5


@dataclass(frozen=True)
class Trial:
    config: HpConfig
    loss: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.loss):
            raise ValueError(f"trial loss must be finite, got {self.loss!r}")


@dataclass(frozen=True)
class TrialLog:
    """All realized trials of one party, in evaluation order."""

    party_id: str
    trials: tuple[Trial, ...]

    def __len__(self) -> int:
        return len(self.trials)

    @property
    def configs(self) -> list[HpConfig]:
        return [t.config for t in self.trials]

    @property
    def losses(self) -> np.ndarray:
        return np.array([t.loss for t in self.trials], dtype=float)

    def best_trial(self) -> Trial:
        """Lowest-loss trial; the earliest one wins ties."""
        if not self.trials:
            raise DataError(f"trial log of {self.party_id} is empty")
        return self.trials[int(np.argmin(self.losses))]

    def best_loss(self) -> float:
        return self.best_trial().loss

    def to_frame(self, space: HpSpace) -> pd.DataFrame:
        rows = {
            "party_id": [self.party_id] * len(self.trials),
            "trial": list(range(len(self.trials))),
        }
        for name in space.names:
            rows[name] = [t.config[name] for t in self.trials]
        rows["loss"] = [t.loss for t in self.trials]
        frame = pd.DataFrame(rows, columns=["party_id", "trial", *space.names, "loss"])
        for d in space.domains:
            if d.kind == "int":
                frame[d.name] = frame[d.name].astype(np.int64)
        return frame

    def to_csv_bytes(self, space: HpSpace) -> bytes:
        """The exact payload a party sends to the aggregator."""
        buf = io.StringIO()
        self.to_frame(space).to_csv(buf, index=False, lineterminator="\n")
        return buf.getvalue().encode("utf-8")

    def to_csv(self, path: str | Path, space: HpSpace) -> int:
        """Write the log; returns the number of bytes written."""
        payload = self.to_csv_bytes(space)
        Path(path).write_bytes(payload)
        return len(payload)

    @classmethod
    def from_csv(cls, path: str | Path, space: HpSpace) -> "TrialLog":
        """
        Read a log written by ``to_csv``.

        Raises:
            DataError: If the file is missing, its header does not match the
                space, or a configuration is invalid for it.
        """
        path = Path(path)
        if not path.exists():
            raise DataError(f"{path}: trial log not found")
        try:
            frame = pd.read_csv(path, dtype={"party_id": str}, float_precision="round_trip")
        except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
            raise DataError(f"{path}: unreadable trial log: {e}") from e
        expected = ["party_id", "trial", *space.names, "loss"]
        if list(frame.columns) != expected:
            raise DataError(f"{path}: header {list(frame.columns)} does not match {expected}")
        if frame.empty:
            raise DataError(f"{path}: trial log has no trials")
        ids = frame["party_id"].unique()
        if len(ids) != 1:
            raise DataError(f"{path}: expected one party id, found {list(ids)}")
        if list(frame["trial"]) != list(range(len(frame))):
            raise DataError(f"{path}: trial column must count 0..{len(frame) - 1}")
        trials = []
        for i, row in enumerate(frame.itertuples(index=False)):
            values = {}
            for d in space.domains:
                v = getattr(row, d.name)
                values[d.name] = int(v) if d.kind == "int" else float(v)
            config = HpConfig(values)
            problems = space.validate(config)
            if problems:
                raise DataError(f"{path}: trial {i}: {'; '.join(problems)}")
            trials.append(Trial(config, float(row.loss)))
        return cls(str(ids[0]), tuple(trials))


def best_loss(log: TrialLog) -> float:
    """Minimum loss in a log."""
    return log.best_loss()


def _evaluate(
    objective: Objective,
    config: HpConfig,
    space: HpSpace,
    rng: np.random.Generator,
    party_id: str,
) -> Trial:
    last: BaseException | None = None
    for attempt in range(MAX_RETRIES + 1):
        try:
            loss = float(objective(config))
            if not math.isfinite(loss):
                raise ValueError(f"objective returned {loss!r}")
            return Trial(config, loss)
        except Exception as e:  # any failed training is retried on a fresh sample
            last = e
            logger.debug("%s: objective failed on %r (%s); resampling", party_id, config, e)
            if attempt < MAX_RETRIES:
                config = space.sample(rng)
    raise ObjectiveError(
        f"{party_id}: objective failed on {MAX_RETRIES + 1} consecutive configurations; last error: {last}"
    ) from last


def run_random_search(
    space: HpSpace,
    objective: Objective,
    n_trials: int,
    rng: np.random.Generator,
    party_id: str = "0",
) -> TrialLog:
    """
    Evaluate ``n_trials`` independent uniform samples.

    Raises:
        ConfigError: If n_trials < 1.
        ObjectiveError: If the objective fails on 6 consecutive samples.
    """
    if n_trials < 1:
        raise ConfigError(f"n_trials must be >= 1, got {n_trials}")
    trials = []
    for t in range(n_trials):
        trial = _evaluate(objective, space.sample(rng), space, rng, party_id)
        logger.debug("%s: trial %d loss %.6f", party_id, t, trial.loss)
        trials.append(trial)
    return TrialLog(party_id, tuple(trials))


def expected_improvement(mu: np.ndarray, sigma: np.ndarray, best: float) -> np.ndarray:
    """
    Expected improvement below ``best`` for a minimization problem.

    Where ``sigma`` is 0 the improvement is deterministic: ``max(best - mu, 0)``.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    improvement = best - mu
    ei = np.maximum(improvement, 0.0)
    pos = sigma > 0
    if pos.any():
        z = improvement[pos] / sigma[pos]
        ei[pos] = improvement[pos] * norm.cdf(z) + sigma[pos] * norm.pdf(z)
    return np.maximum(ei, 0.0)


class _GpEiProposer:
    """Picks the next configuration by EI over a fresh uniform candidate pool."""

    def __init__(
        self,
        space: HpSpace,
        n_cand: int,
        hyper_refit_every: int,
        max_gp_points: int,
        party_id: str,
    ) -> None:
        self.space = space
        self.n_cand = n_cand
        self.hyper_refit_every = hyper_refit_every
        self.max_gp_points = max_gp_points
        self.party_id = party_id
        self._hypers: dict[str, float] | None = None
        self._fits = 0

    def _fit(self, X: np.ndarray, y: np.ndarray) -> GpRegressor:
        if self._hypers is None or self._fits % self.hyper_refit_every == 0:
            gp = fit_gp(X, y)
            self._hypers = {
                "length_scale": gp.length_scale,
                "signal_var": gp.signal_var,
                "noise_var": gp.noise_var,
            }
        else:
            gp = fit_gp(X, y, **self._hypers)
        self._fits += 1
        return gp

    def propose(self, trials: Sequence[Trial], rng: np.random.Generator) -> HpConfig:
        y = np.array([t.loss for t in trials], dtype=float)
        keep = np.arange(y.size)
        if y.size > self.max_gp_points:
            keep = np.sort(np.argsort(y, kind="stable")[: self.max_gp_points])
        X = self.space.encode_many([trials[i].config for i in keep])
        y = y[keep]
        # standardized targets keep the proposal invariant to rescaling the loss
        scale = float(y.std())
        center = float(y.mean())
        ys = (y - center) / (scale if scale > 0 else 1.0)
        try:
            gp = self._fit(X, ys)
        except SurfaceFitError as e:
            logger.debug("%s: GP fit failed (%s); falling back to a random sample", self.party_id, e)
            return self.space.sample(rng)
        candidates = self.space.sample_many(self.n_cand, rng)
        mean, std = gp.predict(self.space.encode_many(candidates), return_std=True)
        ei = expected_improvement(mean, std, float(ys.min()))
        return candidates[int(np.argmax(ei))]


def run_gp_ei(
    space: HpSpace,
    objective: Objective,
    n_trials: int,
    rng: np.random.Generator,
    n_init: int = 10,
    n_cand: int = 256,
    party_id: str = "0",
    hyper_refit_every: int = 10,
    max_gp_points: int = 200,
) -> TrialLog:
    """
    Bayesian optimization with a GP surrogate and expected improvement.

    The first ``n_init`` trials are uniform samples drawn exactly as
    ``run_random_search`` draws them; every later trial maximizes EI over
    ``n_cand`` fresh uniform candidates (first index wins ties). The GP is
    trained on standardized losses of at most ``max_gp_points`` best trials
    so far and re-selects its hyper-parameters every ``hyper_refit_every``
    fits. A failed GP fit degrades that step to a uniform sample.

    Raises:
        ConfigError: Unless n_trials >= n_init >= 2 and n_cand >= 1.
        ObjectiveError: If the objective fails on 6 consecutive samples.
    """
    if not n_trials >= n_init >= 2:
        raise ConfigError(f"need n_trials >= n_init >= 2, got n_trials={n_trials}, n_init={n_init}")
    if n_cand < 1 or hyper_refit_every < 1 or max_gp_points < 2:
        raise ConfigError("n_cand and hyper_refit_every must be >= 1, max_gp_points >= 2")
    proposer = _GpEiProposer(space, n_cand, hyper_refit_every, max_gp_points, party_id)
    trials: list[Trial] = []
    for t in range(n_trials):
        config = space.sample(rng) if t < n_init else proposer.propose(trials, rng)
        trial = _evaluate(objective, config, space, rng, party_id)
        logger.debug("%s: trial %d loss %.6f", party_id, t, trial.loss)
        trials.append(trial)
    return TrialLog(party_id, tuple(trials))


def merge_logs(logs: Iterable[TrialLog]) -> list[Trial]:
    """All trials of all logs, parties ordered by id."""
    return [t for log in sorted(logs, key=lambda lg: lg.party_id) for t in log.trials]
