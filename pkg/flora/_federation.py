"""
Simulation harness for single-shot federated HPO.

The pipeline has five phases:

1. ``holdout``: a stratified global holdout is set aside.
2. ``partition``: the remaining pool is split into party shards.
3. ``local-hpo``: every party tunes on its own shard and reports its trial log.
4. ``aggregate``: the aggregator fits a loss surface on the logs and picks its
   minimizer.
5. ``final-training``: the chosen configuration is scored by pooled k-fold CV
   (centralized training on the union of shards stands in for the federated
   training) and on the holdout.
"""
from __future__ import annotations

import contextlib
import hashlib
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np
from sklearn.model_selection import train_test_split

from ._data import Dataset
from ._errors import ConfigError, DataError, PhaseError
from ._gbdt import GbdtParams, cv_loss, holdout_accuracy
from ._local_hpo import TrialLog, run_gp_ei, run_random_search
from ._space import HpConfig, HpSpace
from ._surface import ALL_SURFACES, DEFAULT_MINIMIZE_BUDGET, SurfaceKind, build_surface, minimize_surface

logger = logging.getLogger(__name__)

PARTITIONS = ("iid", "label-skew")
HPO_ENGINES = ("gp-ei", "random")
DEFAULT_CV_FOLDS = 10


def derive_seed(seed: int, *keys: object) -> int:
    """
    Stable 32-bit seed from a global seed and any number of keys.

    Adding a party never changes the streams of existing parties, since each
    key path hashes independently.
    """
    text = "/".join([str(int(seed)), *(str(k) for k in keys)])
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:4], "little")


def party_id(index: int) -> str:
    return f"party{index}"


@dataclass(frozen=True)
class FederationConfig:
    """
    Everything that determines a federated run besides data and space.

    Attributes:
        parties: Number of parties p.
        partition: ``"iid"`` or ``"label-skew"``.
        beta: Dirichlet concentration for label skew.
        trials: Local HPO trials per party (T).
        surfaces: Surface kinds to build.
        alpha: Standard-deviation weight of SGM_U.
        seed: Global seed; every other seed derives from it.
        cv_folds: k of every k-fold CV.
        holdout_fraction: Share of rows held out globally.
        hpo: Local engine, ``"gp-ei"`` or ``"random"``.
        n_init: Initial uniform trials of the GP-EI engine.
        n_cand: EI candidate pool size.
        minimize_budget: Surface evaluations spent by the aggregator.
        party_regressor: ``"rf"`` or ``"gp"`` for MPLM/APLM party models.
        standardize_parties: Z-score party losses before surface fitting.
        n_jobs: Parties tuned concurrently.
    """

    parties: int = 3
    partition: str = "iid"
    beta: float = 0.5
    trials: int = 500
    surfaces: tuple[SurfaceKind, ...] = ALL_SURFACES
    alpha: float = 1.0
    seed: int = 0
    cv_folds: int = DEFAULT_CV_FOLDS
    holdout_fraction: float = 0.2
    hpo: str = "gp-ei"
    n_init: int = 10
    n_cand: int = 256
    minimize_budget: int = DEFAULT_MINIMIZE_BUDGET
    party_regressor: str = "rf"
    standardize_parties: bool = False
    n_jobs: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "surfaces", tuple(SurfaceKind.parse(s) for s in self.surfaces))
        if self.parties < 1:
            raise ConfigError(f"parties must be >= 1, got {self.parties}")
        if self.partition not in PARTITIONS:
            raise ConfigError(f"partition must be one of {PARTITIONS}, got {self.partition!r}")
        if not self.beta > 0:
            raise ConfigError(f"beta must be > 0, got {self.beta!r}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if not self.surfaces:
            raise ConfigError("at least one surface kind is required")
        if not self.alpha >= 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha!r}")
        if self.cv_folds < 2:
            raise ConfigError(f"cv_folds must be >= 2, got {self.cv_folds}")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ConfigError(f"holdout_fraction must be in (0, 1), got {self.holdout_fraction!r}")
        if self.hpo not in HPO_ENGINES:
            raise ConfigError(f"hpo must be one of {HPO_ENGINES}, got {self.hpo!r}")
        if self.hpo == "gp-ei" and not self.trials >= self.n_init >= 2:
            raise ConfigError(f"gp-ei needs trials >= n_init >= 2, got trials={self.trials}, n_init={self.n_init}")
        if self.n_cand < 1 or self.minimize_budget < 1 or self.n_jobs < 1:
            raise ConfigError("n_cand, minimize_budget and n_jobs must be >= 1")
        if self.party_regressor not in ("rf", "gp"):
            raise ConfigError(f"party_regressor must be 'rf' or 'gp', got {self.party_regressor!r}")

    @property
    def min_per_class(self) -> int:
        """Rows per class every label-skewed shard is topped up to."""
        return 2 * self.cv_folds


@contextlib.contextmanager
def _phase(name: str, timings: dict[str, float] | None = None) -> Iterator[None]:
    logger.info("phase %s: start", name)
    start = time.perf_counter()
    try:
        yield
    except PhaseError:
        raise
    except Exception as e:
        raise PhaseError(name, e) from e
    finally:
        if timings is not None:
            timings[name] = timings.get(name, 0.0) + time.perf_counter() - start


def split_holdout(data: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """
    Stratified split into ``(pool, holdout)``; both keep the parent row order.

    Raises:
        DataError: If a class is too small to appear on both sides.
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"holdout fraction must be in (0, 1), got {fraction!r}")
    if min(data.class_counts()) < 2:
        raise DataError(f"{data.name}: every class needs >= 2 rows for a stratified holdout")
    try:
        pool_idx, hold_idx = train_test_split(
            np.arange(data.n_rows), test_size=fraction, stratify=data.labels, random_state=seed
        )
    except ValueError as e:
        raise DataError(f"{data.name}: cannot hold out {fraction:g} of the rows: {e}") from e
    return (
        data.take(np.sort(pool_idx), f"{data.name}-pool"),
        data.take(np.sort(hold_idx), f"{data.name}-holdout"),
    )


def _shards(data: Dataset, assignment: np.ndarray, p: int) -> list[Dataset]:
    return [data.take(np.flatnonzero(assignment == i), party_id(i)) for i in range(p)]


def partition_iid(data: Dataset, p: int, rng: np.random.Generator) -> list[Dataset]:
    """
    Stratified round-robin split into p shards.

    Each class is shuffled, the classes are concatenated and the rows dealt
    to parties in turn, so shard sizes differ by at most one and every shard
    holds floor or ceil of ``n_c / p`` rows of class c. Shards keep the
    parent row order.

    Raises:
        DataError: If a class has fewer than p rows.
    """
    if p < 1:
        raise ConfigError(f"p must be >= 1, got {p}")
    counts = data.class_counts()
    if min(counts) < p:
        raise DataError(f"{data.name}: class sizes {counts} too small for {p} parties")
    order = np.concatenate([rng.permutation(np.flatnonzero(data.labels == c)) for c in (0, 1)])
    assignment = np.empty(data.n_rows, dtype=np.int64)
    assignment[order] = np.arange(order.size) % p
    return _shards(data, assignment, p)


def _largest_remainder(shares: np.ndarray, n: int) -> np.ndarray:
    raw = shares * n
    counts = np.floor(raw).astype(np.int64)
    left = n - int(counts.sum())
    if left > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:left]] += 1
    return counts


class LabelSkewAssignment(NamedTuple):
    assignment: np.ndarray
    transfers: int


def label_skew_assignment(
    labels: np.ndarray,
    p: int,
    beta: float,
    rng: np.random.Generator,
    min_per_class: int = 2 * DEFAULT_CV_FOLDS,
) -> LabelSkewAssignment:
    """
    Party index per row under Dirichlet(beta) label skew.

    For each class a Dirichlet(beta, ..., beta) draw gives the parties'
    shares, turned into counts by largest remainders. Parties below
    ``min_per_class`` rows of a class then receive rows one at a time from
    the party holding the most of that class; ``transfers`` counts the moved
    rows.

    Raises:
        DataError: If some class has fewer than ``p * min_per_class`` rows.
    """
    if not beta > 0:
        raise ConfigError(f"beta must be > 0, got {beta!r}")
    labels = np.asarray(labels)
    assignment = np.empty(labels.size, dtype=np.int64)
    transfers = 0
    for c in (0, 1):
        rows = rng.permutation(np.flatnonzero(labels == c))
        if rows.size < p * max(min_per_class, 1):
            raise DataError(
                f"class {c} has {rows.size} rows, cannot give {p} parties {max(min_per_class, 1)} each"
            )
        counts = _largest_remainder(rng.dirichlet(np.full(p, float(beta))), rows.size)
        for i in range(p):
            while counts[i] < min_per_class:
                donor = int(np.argmax(counts))
                counts[donor] -= 1
                counts[i] += 1
                transfers += 1
        bounds = np.concatenate([[0], np.cumsum(counts)])
        for i in range(p):
            assignment[rows[bounds[i]:bounds[i + 1]]] = i
    return LabelSkewAssignment(assignment, transfers)


def partition_label_skew(
    data: Dataset,
    p: int,
    beta: float,
    rng: np.random.Generator,
    min_per_class: int = 2 * DEFAULT_CV_FOLDS,
) -> list[Dataset]:
    """
    Split into p shards with Dirichlet(beta) class proportions per party.

    Every shard ends up with at least ``min_per_class`` rows of each class,
    by default enough for ``DEFAULT_CV_FOLDS``-fold CV with two rows per
    class in every fold.
    """
    result = label_skew_assignment(data.labels, p, beta, rng, min_per_class)
    if result.transfers:
        logger.info("%s: label skew moved %d rows to meet %d per class", data.name, result.transfers, min_per_class)
    return _shards(data, result.assignment, p)


class Partition(NamedTuple):
    shards: list[Dataset]
    transfers: int


def partition(data: Dataset, fed: FederationConfig) -> Partition:
    """Apply the configured partition scheme with the run's partition seed."""
    rng = np.random.default_rng(derive_seed(fed.seed, "partition"))
    if fed.partition == "iid":
        return Partition(partition_iid(data, fed.parties, rng), 0)
    result = label_skew_assignment(data.labels, fed.parties, fed.beta, rng, fed.min_per_class)
    if result.transfers:
        logger.info("label skew moved %d rows to meet %d per class", result.transfers, fed.min_per_class)
    return Partition(_shards(data, result.assignment, fed.parties), result.transfers)


def party_folds(shard: Dataset, k: int) -> int:
    """
    Folds a party can use: k, or its smallest class size if that is smaller.

    Raises:
        DataError: If a class has fewer than 2 rows.
    """
    smallest = min(shard.class_counts())
    if smallest < 2:
        raise DataError(f"{shard.name}: class sizes {shard.class_counts()} too small for cross-validation")
    return min(k, smallest)


def run_party(shard: Dataset, space: HpSpace, fed: FederationConfig) -> tuple[TrialLog, int]:
    """Local HPO of one party on its shard; returns the log and the folds used."""
    pid = shard.name
    k = party_folds(shard, fed.cv_folds)
    if k < fed.cv_folds:
        logger.info("%s: using %d folds instead of %d", pid, k, fed.cv_folds)
    fold_seed = derive_seed(fed.seed, "folds", pid)

    def objective(config: HpConfig) -> float:
        return cv_loss(GbdtParams.from_config(config), shard, k=k, seed=fold_seed)

    rng = np.random.default_rng(derive_seed(fed.seed, "party", pid))
    if fed.hpo == "random":
        log = run_random_search(space, objective, fed.trials, rng, party_id=pid)
    else:
        log = run_gp_ei(space, objective, fed.trials, rng, n_init=fed.n_init,
                        n_cand=fed.n_cand, party_id=pid)
    logger.info("%s: %d rows, best local loss %.4f", pid, shard.n_rows, log.best_loss())
    return log, k


class PartyLogs(NamedTuple):
    logs: list[TrialLog]
    folds: dict[str, int]


def collect_party_logs(shards: Sequence[Dataset], space: HpSpace, fed: FederationConfig) -> PartyLogs:
    """
    Run every party's local HPO; logs come back in shard order.

    Shard names serve as party ids and seed each party's streams.
    """
    if fed.n_jobs > 1 and len(shards) > 1:
        with ThreadPoolExecutor(max_workers=fed.n_jobs) as pool:
            results = list(pool.map(lambda s: run_party(s, space, fed), shards))
    else:
        results = [run_party(s, space, fed) for s in shards]
    return PartyLogs([log for log, _ in results], {s.name: k for s, (_, k) in zip(shards, results)})


def communication_bytes(logs: Sequence[TrialLog], space: HpSpace) -> int:
    """Bytes sent to the aggregator: the serialized trial-log CSVs."""
    return sum(len(log.to_csv_bytes(space)) for log in logs)


def aggregate(
    logs: Sequence[TrialLog],
    space: HpSpace,
    fed: FederationConfig,
    kind: SurfaceKind | str,
) -> HpConfig:
    """Fit the surface of ``kind`` on the logs and return its minimizer."""
    surface = build_surface(
        kind, logs, space,
        alpha=fed.alpha,
        seed=derive_seed(fed.seed, "surface"),
        party_regressor=fed.party_regressor,
        standardize_parties=fed.standardize_parties,
    )
    return minimize_surface(surface, space, budget=fed.minimize_budget,
                            seed=derive_seed(fed.seed, "minimize"),
                            n_init=fed.n_init, n_cand=fed.n_cand)


class FinalScore(NamedTuple):
    loss: float
    holdout_accuracy: float


def final_training(
    config: HpConfig,
    pool: Dataset,
    holdout: Dataset,
    fed: FederationConfig,
) -> FinalScore:
    """
    Score a configuration by training on the pooled shards.

    Returns the pooled k-fold CV loss and the balanced accuracy on the
    holdout of a model trained on the whole pool.
    """
    params = GbdtParams.from_config(config)
    loss = cv_loss(params, pool, k=fed.cv_folds, seed=final_fold_seed(fed.seed))
    return FinalScore(loss, holdout_accuracy(params, pool, holdout))


def final_fold_seed(seed: int) -> int:
    """Fold seed shared by the final, oracle and baseline CV scores."""
    return derive_seed(seed, "final-folds")


@dataclass(frozen=True)
class FloraResult:
    """
    Outcome of one federated run with one surface.

    ``final_loss`` is always recomputed by training on the pool, never read
    off the surface.
    """

    chosen_config: HpConfig
    per_party_logs: tuple[TrialLog, ...]
    surface: SurfaceKind
    final_loss: float
    holdout_accuracy: float
    communication_bytes: int
    wall_times: dict[str, float] = field(default_factory=dict, compare=False)
    party_folds: dict[str, int] = field(default_factory=dict)
    transfers: int = 0

    @property
    def final_accuracy(self) -> float:
        return 1.0 - self.final_loss


@dataclass
class PreparedRun:
    pool: Dataset
    holdout: Dataset
    logs: list[TrialLog]
    folds: dict[str, int]
    transfers: int
    comm_bytes: int
    timings: dict[str, float]


def prepare_run(data: Dataset, space: HpSpace, fed: FederationConfig) -> PreparedRun:
    timings: dict[str, float] = {}
    with _phase("holdout", timings):
        pool, holdout = split_holdout(data, fed.holdout_fraction, derive_seed(fed.seed, "holdout"))
    with _phase("partition", timings):
        shards, transfers = partition(pool, fed)
        logger.info("shard sizes: %s", [s.n_rows for s in shards])
    with _phase("local-hpo", timings):
        logs, folds = collect_party_logs(shards, space, fed)
    return PreparedRun(pool, holdout, logs, folds, transfers, communication_bytes(logs, space), timings)


def finish_run(prep: PreparedRun, space: HpSpace, fed: FederationConfig, kind: SurfaceKind) -> FloraResult:
    timings = dict(prep.timings)
    with _phase("aggregate", timings):
        chosen = aggregate(prep.logs, space, fed, kind)
    with _phase("final-training", timings):
        score = final_training(chosen, prep.pool, prep.holdout, fed)
    logger.info("%s: chose %r, pooled CV loss %.4f", kind.value, chosen, score.loss)
    return FloraResult(
        chosen_config=chosen,
        per_party_logs=tuple(prep.logs),
        surface=kind,
        final_loss=score.loss,
        holdout_accuracy=score.holdout_accuracy,
        communication_bytes=prep.comm_bytes,
        wall_times=timings,
        party_folds=dict(prep.folds),
        transfers=prep.transfers,
    )


def flora_run(
    data: Dataset,
    space: HpSpace,
    fed: FederationConfig,
    kind: SurfaceKind | str | None = None,
) -> FloraResult:
    """
    Run the whole pipeline for one surface (the first of ``fed.surfaces``
    unless ``kind`` is given).

    Raises:
        PhaseError: Wrapping the failure of any phase.
    """
    kind = fed.surfaces[0] if kind is None else SurfaceKind.parse(kind)
    return finish_run(prepare_run(data, space, fed), space, fed, kind)


def run_all_surfaces(data: Dataset, space: HpSpace, fed: FederationConfig) -> dict[SurfaceKind, FloraResult]:
    """One result per kind in ``fed.surfaces``, all sharing one set of party logs."""
    prep = prepare_run(data, space, fed)
    return {kind: finish_run(prep, space, fed, kind) for kind in fed.surfaces}
