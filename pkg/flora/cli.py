"""
Command line for flora.

  flora run --manifest M            end-to-end benchmark
  flora partition --manifest M      holdout + party shards
  flora local-hpo --manifest M      one party's trial log
  flora aggregate --manifest M      surfaces, final training and scoring
  flora report DIR                  markdown table from results.csv

``partition``, ``local-hpo`` and ``aggregate`` run the pipeline one phase at a
time through files; with the same manifest and seed their results CSV equals
the one ``run`` writes.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _toml
from ._data import Dataset, read_shard_csv, write_csv
from ._errors import ConfigError, DataError, PhaseError
from ._eval import (
    Scorer,
    read_results_csv,
    render_markdown,
    run_benchmark,
    score_prepared,
    write_results_csv,
)
from ._federation import (
    PreparedRun,
    _phase,
    communication_bytes,
    derive_seed,
    partition,
    party_folds,
    run_party,
    split_holdout,
)
from ._local_hpo import TrialLog
from ._manifest import DatasetSpec, ExperimentManifest

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4

PARTITION_RECORD = "partition.toml"
HOLDOUT_FILE = "holdout.csv"
SHARD_DIR = "shards"


def _add_overrides(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--manifest", required=True, type=Path, help="TOML experiment manifest")
    parser.add_argument("--seed", type=int, help="global seed (replaces the manifest's seed list)")
    parser.add_argument("--out", type=Path, help="output directory (default: manifest 'out', $FLORA_OUT_DIR, flora-out)")
    parser.add_argument("--surface", action="append", choices=["sgm", "sgm-u", "mplm", "aplm", "all"],
                        help="surface kind; repeatable")
    parser.add_argument("--parties", type=int, action="append", help="party count; repeatable")
    parser.add_argument("--trials", type=int, help="local HPO trials per party")
    parser.add_argument("--alpha", type=float, help="std weight of the sgm-u surface")
    parser.add_argument("--oracle-budget", type=int, help="evaluations of the centralized oracle")
    parser.add_argument("--partition", choices=["iid", "label-skew"], help="partition scheme")
    parser.add_argument("--beta", type=float, help="Dirichlet concentration for label-skew")


def _manifest(args: argparse.Namespace) -> ExperimentManifest:
    manifest = ExperimentManifest.load(args.manifest)
    return manifest.with_overrides(
        seed=args.seed,
        out=args.out,
        surfaces=args.surface,
        parties=args.parties,
        trials=args.trials,
        alpha=args.alpha,
        oracle_budget=args.oracle_budget,
        partition=args.partition,
        beta=args.beta,
    )


def _dataset_spec(manifest: ExperimentManifest, name: str | None) -> DatasetSpec:
    if name is None:
        return manifest.datasets[0]
    for spec in manifest.datasets:
        if spec.name == name:
            return spec
    raise ConfigError(f"dataset {name!r} not in manifest ({[d.name for d in manifest.datasets]})")


def cmd_run(args: argparse.Namespace) -> int:
    manifest = _manifest(args)
    outcome = run_benchmark(manifest)
    print(render_markdown(outcome.rows), end="")
    if outcome.failures:
        for f in outcome.failures:
            print(f"flora: {f.phase}: {f.dataset} p={f.p} seed={f.seed}: {f.error}", file=sys.stderr)
        return max(EXIT_RUNTIME if f.exception is None else exit_code(f.exception) for f in outcome.failures)
    return EXIT_OK


def cmd_partition(args: argparse.Namespace) -> int:
    manifest = _manifest(args)
    spec = _dataset_spec(manifest, args.dataset)
    fed = manifest.cell_config(manifest.parties[0], manifest.seeds[0])
    out = manifest.out_dir()
    with _phase("ingest"):
        data = spec.load()
    with _phase("holdout"):
        pool, holdout = split_holdout(data, fed.holdout_fraction, derive_seed(fed.seed, "holdout"))
    with _phase("partition"):
        shards, transfers = partition(pool, fed)
    (out / SHARD_DIR).mkdir(parents=True, exist_ok=True)
    write_csv(holdout, out / HOLDOUT_FILE)
    for shard in shards:
        write_csv(shard, out / SHARD_DIR / f"{shard.name}.csv")
    _toml.dump({
        "dataset": spec.name,
        "seed": fed.seed,
        "parties": fed.parties,
        "partition": fed.partition,
        "beta": fed.beta,
        "holdout_fraction": fed.holdout_fraction,
        "transfers": transfers,
        "sha256": data.checksum(),
        "holdout": {"file": HOLDOUT_FILE, "rows": holdout.n_rows},
        "shards": [{"party": s.name, "file": f"{SHARD_DIR}/{s.name}.csv", "rows": s.n_rows,
                    "class_sizes": list(s.class_counts())} for s in shards],
    }, out / PARTITION_RECORD)
    print(f"{len(shards)} shards and a {holdout.n_rows}-row holdout written to {out}")
    return EXIT_OK


def cmd_local_hpo(args: argparse.Namespace) -> int:
    manifest = _manifest(args)
    fed = manifest.cell_config(manifest.parties[0], manifest.seeds[0])
    with _phase("local-hpo"):
        shard = read_shard_csv(args.shard)
        log, k = run_party(shard, manifest.space, fed)
    target = args.log or manifest.out_dir() / "logs" / f"{shard.name}.csv"
    target.parent.mkdir(parents=True, exist_ok=True)
    n = log.to_csv(target, manifest.space)
    print(f"{shard.name}: {len(log)} trials ({k} folds), best loss {log.best_loss():.4f}, {n} bytes -> {target}")
    return EXIT_OK


def _read_partition(directory: Path) -> tuple[dict, Dataset, list[Dataset]]:
    with _phase("aggregate"):
        record = _toml.load(directory / PARTITION_RECORD)
        try:
            holdout = read_shard_csv(directory / record["holdout"]["file"], name=f"{record['dataset']}-holdout")
            shards = [read_shard_csv(directory / s["file"], name=s["party"]) for s in record["shards"]]
        except KeyError as e:
            raise DataError(f"{directory / PARTITION_RECORD}: missing entry {e}") from e
    return record, holdout, shards


def cmd_aggregate(args: argparse.Namespace) -> int:
    manifest = _manifest(args)
    record, holdout, shards = _read_partition(args.partition_dir)
    fed = manifest.cell_config(int(record["parties"]), int(record["seed"]))
    with _phase("aggregate"):
        logs = [TrialLog.from_csv(path, manifest.space) for path in args.logs]
        if len(logs) != len(shards):
            raise DataError(f"{len(logs)} trial logs for {len(shards)} shards")
        fed = dataclasses.replace(fed, trials=len(logs[0]))
    combined = Dataset.concat(shards, f"{record['dataset']}-pool")
    pool = combined.take(np.argsort(combined.row_ids, kind="stable"))
    prep = PreparedRun(
        pool=pool,
        holdout=holdout,
        logs=logs,
        folds={s.name: party_folds(s, fed.cv_folds) for s in shards},
        transfers=int(record.get("transfers", 0)),
        comm_bytes=communication_bytes(logs, manifest.space),
        timings={},
    )
    scorer = Scorer(manifest.space, manifest.oracle_budget, fed)
    rows = score_prepared(record["dataset"], prep, manifest.space, fed, scorer, manifest.timings)
    out = manifest.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    write_results_csv(rows, out / "results.csv")
    print(render_markdown(rows), end="")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    path: Path = args.results
    if path.is_dir():
        path = path / "results.csv"
    rows = read_results_csv(path) if path.exists() else []
    text = render_markdown(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flora", description="Single-shot federated HPO by loss-surface aggregation")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every cell of a manifest")
    _add_overrides(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("partition", help="write the holdout and party shards")
    _add_overrides(p)
    p.add_argument("--dataset", help="manifest dataset name (default: the first)")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("local-hpo", help="run one party's local HPO on its shard")
    _add_overrides(p)
    p.add_argument("--shard", required=True, type=Path, help="shard CSV written by 'partition'")
    p.add_argument("--log", type=Path, help="trial-log CSV to write (default: OUT/logs/<party>.csv)")
    p.set_defaults(func=cmd_local_hpo)

    p = sub.add_parser("aggregate", help="build surfaces from trial logs and score the chosen configs")
    _add_overrides(p)
    p.add_argument("--partition-dir", required=True, type=Path, help="output directory of 'partition'")
    p.add_argument("--logs", required=True, nargs="+", type=Path, help="party trial-log CSVs")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("report", help="render results.csv as a markdown table")
    p.add_argument("results", type=Path, help="results directory or CSV file")
    p.add_argument("--out", type=Path, help="also write the table to this file")
    p.set_defaults(func=cmd_report)
    return parser


def exit_code(error: BaseException) -> int:
    """2 for configuration errors, 3 for data errors, 4 for anything else."""
    cause = error.__cause__ if isinstance(error, PhaseError) and error.__cause__ is not None else error
    if isinstance(cause, ConfigError):
        return EXIT_CONFIG
    if isinstance(cause, DataError):
        return EXIT_DATA
    return EXIT_RUNTIME


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PhaseError as e:
        print(f"flora: {e}", file=sys.stderr)
        return exit_code(e)
    except Exception as e:
        print(f"flora: {args.command}: {e}", file=sys.stderr)
        return exit_code(e)


if __name__ == "__main__":
    sys.exit(main())
