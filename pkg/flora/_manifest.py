"""
TOML experiment manifests.

A manifest names the datasets, the search space and the federation settings
of a benchmark. Loading fills every default, so ``to_dict`` of a loaded
manifest is a fully specified run that reloads to the same manifest.
"""
from __future__ import annotations

import dataclasses
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import _toml
from ._data import Dataset, ingest_csv, make_synthetic
from ._errors import ConfigError
from ._federation import FederationConfig
from ._space import GBDT_SPACE, HpSpace
from ._surface import ALL_SURFACES, SurfaceKind

logger = logging.getLogger(__name__)

OUT_DIR_ENV = "FLORA_OUT_DIR"
DEFAULT_OUT_DIR = "flora-out"
DEFAULT_ORACLE_BUDGET = 500
MIN_ORACLE_BUDGET = 50

_TOP_KEYS = {"seed", "out", "oracle_budget", "timings", "space", "federation", "datasets", "record"}
_SYNTHETIC_KEYS = {"rows", "features", "noise", "informative", "seed"}
_FEDERATION_KEYS = {
    "parties", "partition", "beta", "trials", "surfaces", "alpha", "cv_folds",
    "holdout_fraction", "hpo", "n_init", "n_cand", "minimize_budget",
    "party_regressor", "standardize_parties", "seeds", "n_jobs",
}


@dataclass(frozen=True)
class DatasetSpec:
    """Where a dataset comes from: a CSV file or the synthetic generator."""

    name: str
    path: Path | None = None
    label: str | None = None
    positive: str | None = None
    synthetic: Mapping[str, Any] | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ConfigError("dataset needs a name")
        if (self.path is None) == (self.synthetic is None):
            raise ConfigError(f"dataset {self.name}: give exactly one of 'path' or 'synthetic'")
        if self.path is not None and not self.label:
            raise ConfigError(f"dataset {self.name}: 'label' column is required with 'path'")
        if self.synthetic is not None:
            unknown = set(self.synthetic) - _SYNTHETIC_KEYS
            if unknown:
                raise ConfigError(f"dataset {self.name}: unknown synthetic keys {sorted(unknown)}")
            s = self.synthetic
            object.__setattr__(self, "synthetic", {
                "rows": int(s.get("rows", 1000)),
                "features": int(s.get("features", 5)),
                "noise": float(s.get("noise", 0.1)),
                "informative": int(s.get("informative", 2)),
                "seed": int(s.get("seed", 0)),
            })

    def load(self) -> Dataset:
        if self.path is not None:
            return ingest_csv(self.path, self.label, self.positive, name=self.name)
        s = self.synthetic
        return make_synthetic(
            n_rows=s["rows"],
            n_features=s["features"],
            noise=s["noise"],
            informative=s["informative"],
            seed=s["seed"],
            name=self.name,
        )

    def to_dict(self) -> dict[str, Any]:
        if self.path is not None:
            return {"name": self.name, "path": self.path.as_posix(), "label": self.label,
                    "positive": self.positive}
        return {"name": self.name, "synthetic": dict(self.synthetic)}


def _get(table: Mapping[str, Any], key: str, kind: type | tuple[type, ...], default: Any, where: str) -> Any:
    if key not in table:
        return default
    value = table[key]
    if isinstance(value, bool) and bool not in (kind if isinstance(kind, tuple) else (kind,)):
        raise ConfigError(f"{where}.{key}: expected {kind}, got a boolean")
    if not isinstance(value, kind):
        raise ConfigError(f"{where}.{key}: expected {kind}, got {type(value).__name__}")
    return value


def _int_list(value: Any, where: str) -> tuple[int, ...]:
    items = value if isinstance(value, list) else [value]
    if not items or not all(isinstance(v, int) and not isinstance(v, bool) for v in items):
        raise ConfigError(f"{where}: expected a non-empty list of integers")
    return tuple(items)


def _surfaces(value: Any) -> tuple[SurfaceKind, ...]:
    items = value if isinstance(value, list) else [value]
    if any(str(v).lower() == "all" for v in items):
        return ALL_SURFACES
    return tuple(SurfaceKind.parse(v) for v in items)


@dataclass(frozen=True)
class ExperimentManifest:
    """
    A fully resolved experiment.

    ``federation`` holds every federation setting; its ``parties`` and
    ``seed`` are placeholders overridden per cell from ``parties`` and
    ``seeds``.
    """

    datasets: tuple[DatasetSpec, ...]
    space: HpSpace = GBDT_SPACE
    federation: FederationConfig = field(default_factory=FederationConfig)
    parties: tuple[int, ...] = (3,)
    seeds: tuple[int, ...] = (0,)
    seed: int = 0
    oracle_budget: int = DEFAULT_ORACLE_BUDGET
    out: Path | None = None
    timings: bool = False

    def __post_init__(self) -> None:
        if not self.datasets:
            raise ConfigError("manifest needs at least one [[datasets]] entry")
        names = [d.name for d in self.datasets]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate dataset names: {names}")
        if not self.parties or min(self.parties) < 1:
            raise ConfigError(f"parties must be >= 1, got {list(self.parties)}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.oracle_budget < MIN_ORACLE_BUDGET:
            raise ConfigError(f"oracle_budget must be >= {MIN_ORACLE_BUDGET}, got {self.oracle_budget}")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], base_dir: str | Path = ".") -> "ExperimentManifest":
        """
        Build a manifest from parsed TOML.

        Relative dataset paths are resolved against ``base_dir``.

        Raises:
            ConfigError: On unknown keys, wrong types or invalid values.
        """
        unknown = set(doc) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown manifest keys: {sorted(unknown)}")
        base = Path(base_dir)
        seed = _get(doc, "seed", int, 0, "manifest")
        out = _get(doc, "out", str, None, "manifest")
        space_table = _get(doc, "space", dict, None, "manifest")
        space = HpSpace.from_api_config(space_table) if space_table else GBDT_SPACE

        fed_table = _get(doc, "federation", dict, {}, "manifest")
        unknown = set(fed_table) - _FEDERATION_KEYS
        if unknown:
            raise ConfigError(f"unknown [federation] keys: {sorted(unknown)}")
        where = "federation"
        parties = _int_list(fed_table.get("parties", [3]), "federation.parties")
        seeds = _int_list(fed_table.get("seeds", [seed]), "federation.seeds")
        federation = FederationConfig(
            parties=parties[0],
            partition=_get(fed_table, "partition", str, "iid", where),
            beta=float(_get(fed_table, "beta", (int, float), 0.5, where)),
            trials=_get(fed_table, "trials", int, 500, where),
            surfaces=_surfaces(fed_table.get("surfaces", "all")),
            alpha=float(_get(fed_table, "alpha", (int, float), 1.0, where)),
            seed=seeds[0],
            cv_folds=_get(fed_table, "cv_folds", int, 10, where),
            holdout_fraction=float(_get(fed_table, "holdout_fraction", (int, float), 0.2, where)),
            hpo=_get(fed_table, "hpo", str, "gp-ei", where),
            n_init=_get(fed_table, "n_init", int, 10, where),
            n_cand=_get(fed_table, "n_cand", int, 256, where),
            minimize_budget=_get(fed_table, "minimize_budget", int, 2000, where),
            party_regressor=_get(fed_table, "party_regressor", str, "rf", where),
            standardize_parties=_get(fed_table, "standardize_parties", bool, False, where),
            n_jobs=_get(fed_table, "n_jobs", int, 1, where),
        )

        entries = _get(doc, "datasets", list, [], "manifest")
        datasets = []
        for i, entry in enumerate(entries):
            if not isinstance(entry, dict):
                raise ConfigError(f"datasets[{i}]: expected a table")
            extra = set(entry) - {"name", "path", "label", "positive", "synthetic", "sha256"}
            if extra:
                raise ConfigError(f"datasets[{i}]: unknown keys {sorted(extra)}")
            path = entry.get("path")
            positive = entry.get("positive")
            datasets.append(DatasetSpec(
                name=str(entry.get("name") or (Path(path).stem if path else "")),
                path=(base / path).resolve() if path is not None else None,
                label=entry.get("label"),
                positive=None if positive is None else str(positive),
                synthetic=entry.get("synthetic"),
            ))
        return cls(
            datasets=tuple(datasets),
            space=space,
            federation=federation,
            parties=parties,
            seeds=seeds,
            seed=seed,
            oracle_budget=_get(doc, "oracle_budget", int, DEFAULT_ORACLE_BUDGET, "manifest"),
            out=Path(out) if out else None,
            timings=_get(doc, "timings", bool, False, "manifest"),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentManifest":
        path = Path(path)
        return cls.from_dict(_toml.load(path), base_dir=path.parent)

    def with_overrides(
        self,
        *,
        seed: int | None = None,
        out: str | Path | None = None,
        surfaces: Sequence[str] | None = None,
        parties: Sequence[int] | None = None,
        trials: int | None = None,
        alpha: float | None = None,
        oracle_budget: int | None = None,
        partition: str | None = None,
        beta: float | None = None,
    ) -> "ExperimentManifest":
        """Command-line overrides; ``seed`` replaces the seed list too."""
        fed_changes: dict[str, Any] = {}
        changes: dict[str, Any] = {}
        if seed is not None:
            changes.update(seed=seed, seeds=(seed,))
            fed_changes["seed"] = seed
        if out is not None:
            changes["out"] = Path(out)
        if surfaces is not None:
            fed_changes["surfaces"] = _surfaces(list(surfaces))
        if parties is not None:
            changes["parties"] = _int_list(list(parties), "--parties")
            fed_changes["parties"] = changes["parties"][0]
        if trials is not None:
            fed_changes["trials"] = trials
        if alpha is not None:
            fed_changes["alpha"] = alpha
        if partition is not None:
            fed_changes["partition"] = partition
        if beta is not None:
            fed_changes["beta"] = beta
        if oracle_budget is not None:
            changes["oracle_budget"] = oracle_budget
        if fed_changes:
            changes["federation"] = dataclasses.replace(self.federation, **fed_changes)
        return dataclasses.replace(self, **changes) if changes else self

    def out_dir(self) -> Path:
        """``out`` if set, else ``$FLORA_OUT_DIR``, else ``flora-out``."""
        if self.out is not None:
            return self.out
        return Path(os.environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR)

    def cell_config(self, parties: int, seed: int) -> FederationConfig:
        return dataclasses.replace(self.federation, parties=parties, seed=seed)

    def to_dict(self) -> dict[str, Any]:
        """Resolved manifest with every default spelled out."""
        fed = self.federation
        return {
            "seed": self.seed,
            "out": self.out.as_posix() if self.out is not None else None,
            "oracle_budget": self.oracle_budget,
            "timings": self.timings,
            "space": self.space.to_api_config(),
            "federation": {
                "parties": list(self.parties),
                "partition": fed.partition,
                "beta": fed.beta,
                "trials": fed.trials,
                "surfaces": [k.value for k in fed.surfaces],
                "alpha": fed.alpha,
                "cv_folds": fed.cv_folds,
                "holdout_fraction": fed.holdout_fraction,
                "hpo": fed.hpo,
                "n_init": fed.n_init,
                "n_cand": fed.n_cand,
                "minimize_budget": fed.minimize_budget,
                "party_regressor": fed.party_regressor,
                "standardize_parties": fed.standardize_parties,
                "seeds": list(self.seeds),
                "n_jobs": fed.n_jobs,
            },
            "datasets": [d.to_dict() for d in self.datasets],
        }

    def echo(self, path: str | Path, record: Mapping[str, Any] | None = None) -> None:
        """
        Write the resolved manifest to ``path``.

        ``record`` lands in a ``[record]`` table that loading ignores:
        checksums, derived seeds and other facts of the run.
        """
        doc = self.to_dict()
        if record:
            doc["record"] = dict(record)
        _toml.dump(doc, path)
        logger.info("wrote %s", path)
