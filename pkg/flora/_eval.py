"""
Metrics, oracles and benchmark tables.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from ._data import Dataset, file_checksum
from ._errors import ConfigError, DataError, PhaseError
from ._federation import (
    FederationConfig,
    FloraResult,
    PreparedRun,
    _phase,
    derive_seed,
    final_fold_seed,
    finish_run,
    prepare_run,
)
from ._gbdt import GbdtParams, cv_loss
from ._local_hpo import TrialLog, run_gp_ei
from ._manifest import MIN_ORACLE_BUDGET, ExperimentManifest
from ._space import BASELINE_CONFIG, HpConfig, HpSpace
from ._surface import SurfaceKind

logger = logging.getLogger(__name__)

RESULT_COLUMNS = (
    "dataset", "p", "surface", "T", "seed", "a", "a_star", "b",
    "relative_regret", "party_max_min", "comm_bytes", "wall_time_s", "a_holdout",
)
FAILURE_COLUMNS = ("dataset", "p", "seed", "phase", "error")

_LABELS = {
    SurfaceKind.SGM: "SGM",
    SurfaceKind.SGM_U: "SGM+U",
    SurfaceKind.MPLM: "MPLM",
    SurfaceKind.APLM: "APLM",
}


def relative_regret(a: float, a_star: float, b: float) -> float:
    """
    ``(a_star - a) / (a_star - b)``: 0 at the oracle, 1 at the baseline.

    Raises:
        DataError: If a_star <= b ("no headroom") or a value is outside [0, 1].
    """
    for label, v in (("a", a), ("a_star", a_star), ("b", b)):
        if not 0.0 <= v <= 1.0:
            raise DataError(f"{label} must be in [0, 1], got {v!r}")
    if a_star <= b:
        raise DataError(f"no headroom: oracle {a_star:.4f} does not beat baseline {b:.4f}")
    return (a_star - a) / (a_star - b)


def party_max_min(logs: Sequence[TrialLog]) -> float:
    """
    ``(1 - min_i L_i) / (1 - max_i L_i)`` over the parties' best losses.

    Raises:
        DataError: Without logs, or if some party's best loss is 1.
    """
    if not logs:
        raise DataError("party_max_min needs at least one trial log")
    best = [log.best_loss() for log in logs]
    if max(best) >= 1.0:
        raise DataError("a party's best loss is 1; its best accuracy is zero")
    return (1.0 - min(best)) / (1.0 - max(best))


def centralized_hpo_oracle(
    space: HpSpace,
    data: Dataset,
    budget: int,
    k: int,
    rng: np.random.Generator,
    fold_seed: int = 0,
    n_init: int = 10,
    n_cand: int = 256,
) -> tuple[HpConfig, float]:
    """
    GP-EI HPO on pooled data; returns the best configuration and its
    balanced accuracy (a lower bound on the true optimum at this budget).

    Raises:
        ConfigError: If budget < 50.
    """
    if budget < MIN_ORACLE_BUDGET:
        raise ConfigError(f"oracle budget must be >= {MIN_ORACLE_BUDGET}, got {budget}")

    def objective(config: HpConfig) -> float:
        return cv_loss(GbdtParams.from_config(config), data, k=k, seed=fold_seed)

    log = run_gp_ei(space, objective, budget, rng, n_init=n_init, n_cand=n_cand, party_id="oracle")
    best = log.best_trial()
    logger.info("oracle@%d on %s: %.4f with %r", budget, data.name, 1.0 - best.loss, best.config)
    return best.config, 1.0 - best.loss


def baseline_score(data: Dataset, k: int, fold_seed: int = 0, config: HpConfig = BASELINE_CONFIG) -> float:
    """k-fold CV balanced accuracy of the expert default configuration."""
    return 1.0 - cv_loss(GbdtParams.from_config(config), data, k=k, seed=fold_seed)


@dataclass(frozen=True)
class ResultRow:
    """One line of the results CSV: one dataset, p, surface and seed."""

    dataset: str
    p: int
    surface: str
    T: int
    seed: int
    a: float
    a_star: float
    b: float
    relative_regret: float
    party_max_min: float
    comm_bytes: int
    wall_time_s: float | None = None
    a_holdout: float | None = None


def result_rows(
    dataset: str,
    results: Mapping[SurfaceKind, FloraResult],
    fed: FederationConfig,
    a_star: float,
    b: float,
    timings: bool = False,
) -> list[ResultRow]:
    rows = []
    for kind, res in results.items():
        a = res.final_accuracy
        try:
            regret = relative_regret(a, a_star, b)
        except DataError as e:
            logger.warning("%s p=%d seed=%d %s: %s", dataset, fed.parties, fed.seed, kind.value, e)
            regret = math.nan
        rows.append(ResultRow(
            dataset=dataset,
            p=fed.parties,
            surface=kind.value,
            T=fed.trials,
            seed=fed.seed,
            a=a,
            a_star=a_star,
            b=b,
            relative_regret=regret,
            party_max_min=party_max_min(res.per_party_logs),
            comm_bytes=res.communication_bytes,
            wall_time_s=sum(res.wall_times.values()) if timings else None,
            a_holdout=res.holdout_accuracy,
        ))
    return rows


def _cell(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def results_csv_text(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for row in rows:
        writer.writerow([_cell(getattr(row, c)) for c in RESULT_COLUMNS])
    return buf.getvalue()


def write_results_csv(rows: Iterable[ResultRow], path: str | Path) -> None:
    """Write rows with the full float precision; NaN and None become empty cells."""
    Path(path).write_text(results_csv_text(rows), encoding="utf-8", newline="\n")


def read_results_csv(path: str | Path) -> list[ResultRow]:
    """
    Read a results CSV.

    Raises:
        DataError: If the file is missing or its header is wrong.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: results file not found")
    frame = pd.read_csv(path, dtype={"dataset": str, "surface": str}, float_precision="round_trip")
    if tuple(frame.columns) != RESULT_COLUMNS:
        raise DataError(f"{path}: header {list(frame.columns)} does not match {list(RESULT_COLUMNS)}")
    rows = []
    for record in frame.to_dict("records"):
        values = {}
        for name, value in record.items():
            if name in ("p", "T", "seed", "comm_bytes"):
                values[name] = int(value)
            elif name in ("dataset", "surface"):
                values[name] = str(value)
            elif name in ("wall_time_s", "a_holdout"):
                values[name] = None if pd.isna(value) else float(value)
            else:
                values[name] = float(value)
        rows.append(ResultRow(**values))
    return rows


@dataclass(frozen=True)
class RegretReport:
    """Median over seeds of one (dataset, p, surface) cell."""

    dataset: str
    p: int
    surface: str
    a: float
    a_star: float
    b: float
    relative_regret: float
    party_max_min: float
    seeds: tuple[int, ...]
    T: int


def regret_reports(rows: Sequence[ResultRow]) -> list[RegretReport]:
    """Group rows by (dataset, p, surface) in first-seen order; medians ignore NaN."""
    groups: dict[tuple[str, int, str], list[ResultRow]] = {}
    for row in rows:
        groups.setdefault((row.dataset, row.p, row.surface), []).append(row)

    def median(values: list[float]) -> float:
        arr = np.array(values, dtype=float)
        return float(np.median(arr[~np.isnan(arr)])) if (~np.isnan(arr)).any() else math.nan

    out = []
    for (dataset, p, surface), group in groups.items():
        out.append(RegretReport(
            dataset=dataset,
            p=p,
            surface=surface,
            a=median([r.a for r in group]),
            a_star=median([r.a_star for r in group]),
            b=median([r.b for r in group]),
            relative_regret=median([r.relative_regret for r in group]),
            party_max_min=median([r.party_max_min for r in group]),
            seeds=tuple(r.seed for r in group),
            T=group[0].T,
        ))
    return out


def summarize(rows: Sequence[ResultRow]) -> pd.DataFrame:
    """
    Relative-regret table: one row per (dataset, p), a ``Baseline`` column
    fixed at 1.0 and one column per surface (median over seeds).
    """
    reports = regret_reports(rows)
    kinds = [k for k in SurfaceKind if any(r.surface == k.value for r in reports)]
    keys = list(dict.fromkeys((r.dataset, r.p) for r in reports))
    table = pd.DataFrame(
        math.nan,
        index=pd.MultiIndex.from_tuples(keys, names=["dataset", "p"]) if keys
        else pd.MultiIndex.from_arrays([[], []], names=["dataset", "p"]),
        columns=["Baseline", *(_LABELS[k] for k in kinds)],
    )
    table["Baseline"] = 1.0
    for r in reports:
        table.loc[(r.dataset, r.p), _LABELS[SurfaceKind.parse(r.surface)]] = r.relative_regret
    return table


def aggregate_row(table: pd.DataFrame) -> pd.DataFrame:
    """Unweighted mean and population std of every column (NaN cells skipped)."""
    return pd.DataFrame({"mean": table.mean(axis=0), "std": table.std(axis=0, ddof=0)}).T


def render_markdown(rows: Sequence[ResultRow]) -> str:
    """
    Markdown relative-regret table with a trailing ``Aggregate`` row of
    mean ± population std over the dataset rows.
    """
    table = summarize(rows)
    reports = {(r.dataset, r.p): r for r in regret_reports(rows)}
    header = ["Dataset", "p", "party max/min", *table.columns]
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]

    def fmt(v: float) -> str:
        return "n/a" if math.isnan(v) else f"{v:.4f}"

    for (dataset, p), values in table.iterrows():
        pmm = reports[(dataset, p)].party_max_min
        cells = [dataset, str(p), fmt(pmm), *(fmt(v) for v in values)]
        lines.append("| " + " | ".join(cells) + " |")
    if len(table):
        agg = aggregate_row(table)
        cells = ["Aggregate", "", ""]
        for col in table.columns:
            m, s = agg.loc["mean", col], agg.loc["std", col]
            cells.append("n/a" if math.isnan(m) else f"{m:.3f} ± {s:.2f}")
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CellFailure:
    dataset: str
    p: int
    seed: int
    phase: str
    error: str
    exception: BaseException | None = field(default=None, compare=False, repr=False)


def write_failures_csv(failures: Iterable[CellFailure], path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FAILURE_COLUMNS)
    for f in failures:
        writer.writerow([_cell(getattr(f, c)) for c in FAILURE_COLUMNS])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


class Scorer:
    """
    Oracle and baseline accuracies of a pool, cached per (dataset, seed).

    Both use the final-training fold seed, so a, a* and b of one cell are
    measured on the same folds.
    """

    def __init__(self, space: HpSpace, oracle_budget: int, fed: FederationConfig) -> None:
        self.space = space
        self.oracle_budget = oracle_budget
        self.fed = fed
        self._cache: dict[tuple[str, int], tuple[float, float]] = {}

    def anchors(self, name: str, pool: Dataset, seed: int) -> tuple[float, float]:
        key = (name, seed)
        if key not in self._cache:
            fold_seed = final_fold_seed(seed)
            with _phase("oracle"):
                _, a_star = centralized_hpo_oracle(
                    self.space, pool, self.oracle_budget, self.fed.cv_folds,
                    np.random.default_rng(derive_seed(seed, "oracle")),
                    fold_seed=fold_seed, n_init=self.fed.n_init, n_cand=self.fed.n_cand,
                )
            with _phase("baseline"):
                b = baseline_score(pool, self.fed.cv_folds, fold_seed)
            self._cache[key] = (a_star, b)
        return self._cache[key]


def score_prepared(
    name: str,
    prep: PreparedRun,
    space: HpSpace,
    fed: FederationConfig,
    scorer: Scorer,
    timings: bool = False,
) -> list[ResultRow]:
    """Aggregate, train and score every configured surface of one cell."""
    results = {kind: finish_run(prep, space, fed, kind) for kind in fed.surfaces}
    a_star, b = scorer.anchors(name, prep.pool, fed.seed)
    return result_rows(name, results, fed, a_star, b, timings)


@dataclass
class BenchmarkOutcome:
    rows: list[ResultRow]
    failures: list[CellFailure]
    record: dict


def run_benchmark(manifest: ExperimentManifest, out_dir: str | Path | None = None) -> BenchmarkOutcome:
    """
    Execute every (dataset, seed, p) cell of a manifest.

    Writes ``results.csv``, ``results.md``, ``failures.csv`` and the
    resolved ``manifest.toml`` into the output directory. A failing cell is
    recorded and the run continues.
    """
    out = Path(out_dir) if out_dir is not None else manifest.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    rows: list[ResultRow] = []
    failures: list[CellFailure] = []
    record: dict = {"datasets": {}, "cells": []}
    scorer = Scorer(manifest.space, manifest.oracle_budget, manifest.federation)

    for spec in manifest.datasets:
        try:
            data = spec.load()
        except (DataError, ConfigError) as e:
            logger.error("%s: %s", spec.name, e)
            failures.append(CellFailure(spec.name, 0, 0, "ingest", str(e), e))
            continue
        info = {"rows": data.n_rows, "columns": data.n_features,
                "class_sizes": list(data.class_counts()), "sha256": data.checksum()}
        if spec.path is not None:
            info["file_sha256"] = file_checksum(spec.path)
        if data.imputed:
            info["imputed"] = {col: n for col, n in data.imputed}
        record["datasets"][spec.name] = info
        for seed in manifest.seeds:
            for p in manifest.parties:
                fed = manifest.cell_config(p, seed)
                try:
                    prep = prepare_run(data, manifest.space, fed)
                    rows.extend(score_prepared(spec.name, prep, manifest.space, fed, scorer, manifest.timings))
                except PhaseError as e:
                    logger.error("%s p=%d seed=%d: %s", spec.name, p, seed, e)
                    failures.append(CellFailure(spec.name, p, seed, e.phase, str(e.__cause__ or e), e))
                    continue
                except DataError as e:
                    logger.error("%s p=%d seed=%d: %s", spec.name, p, seed, e)
                    failures.append(CellFailure(spec.name, p, seed, "report", str(e), e))
                    continue
                record["cells"].append({
                    "dataset": spec.name, "p": p, "seed": seed,
                    "holdout_seed": derive_seed(seed, "holdout"),
                    "partition_seed": derive_seed(seed, "partition"),
                    "final_fold_seed": final_fold_seed(seed),
                    "party_folds": dict(prep.folds),
                    "transfers": prep.transfers,
                })

    write_results_csv(rows, out / "results.csv")
    (out / "results.md").write_text(render_markdown(rows), encoding="utf-8", newline="\n")
    write_failures_csv(failures, out / "failures.csv")
    manifest.echo(out / "manifest.toml", record)
    logger.info("%d result rows, %d failed cells, written to %s", len(rows), len(failures), out)
    return BenchmarkOutcome(rows, failures, record)
