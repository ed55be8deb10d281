"""
Single-shot federated hyper-parameter optimization by loss-surface aggregation.

Every party tunes a gradient-boosted tree model on its own data and sends only
its (configuration, loss) trial log to an aggregator. The aggregator fits a
unified loss surface on the logs and picks the configuration that minimizes
it, which is then used for one federated training.
"""
from __future__ import annotations

import re


def _get_version() -> str:
    try:
        from importlib.metadata import version
        return version("flora-hpo")
    except Exception:
        pass
    try:
        from pathlib import Path
        path = Path(__file__).resolve().parents[1] / "pyproject.toml"
        if path.exists():
            m = re.search(r'version\s*=\s*"([^"]+)"', path.read_text(encoding="utf-8"))
            return m.group(1) if m else "0.0.0"
    except Exception:
        pass
    return "0.0.0"

__version__ = _get_version()

from ._data import (
    REFERENCE_DATASETS,
    Dataset,
    DatasetInfo,
    file_checksum,
    ingest_csv,
    make_synthetic,
    read_shard_csv,
    write_csv,
)
from ._errors import (
    ConfigError,
    DataError,
    EncodingError,
    ObjectiveError,
    PhaseError,
    SurfaceFitError,
)
from ._eval import (
    RegretReport,
    ResultRow,
    baseline_score,
    centralized_hpo_oracle,
    party_max_min,
    read_results_csv,
    regret_reports,
    relative_regret,
    render_markdown,
    run_benchmark,
    summarize,
    write_results_csv,
)
from ._federation import (
    FederationConfig,
    FloraResult,
    collect_party_logs,
    communication_bytes,
    derive_seed,
    final_fold_seed,
    final_training,
    flora_run,
    label_skew_assignment,
    partition,
    partition_iid,
    partition_label_skew,
    party_folds,
    party_id,
    run_all_surfaces,
    split_holdout,
)
from ._gbdt import (
    GbdtModel,
    GbdtParams,
    balanced_accuracy,
    cv_loss,
    fit,
    holdout_accuracy,
    predict_proba,
)
from ._local_hpo import (
    Trial,
    TrialLog,
    best_loss,
    expected_improvement,
    run_gp_ei,
    run_random_search,
)
from ._manifest import DatasetSpec, ExperimentManifest
from ._regressors import GpRegressor, RfRegressor, fit_gp, fit_rf
from ._space import BASELINE_CONFIG, GBDT_SPACE, HpConfig, HpDomain, HpSpace
from ._surface import Surface, SurfaceKind, build_surface, minimize_surface

__all__ = [
    "BASELINE_CONFIG",
    "ConfigError",
    "DataError",
    "Dataset",
    "DatasetInfo",
    "DatasetSpec",
    "EncodingError",
    "ExperimentManifest",
    "FederationConfig",
    "FloraResult",
    "GBDT_SPACE",
    "GbdtModel",
    "GbdtParams",
    "GpRegressor",
    "HpConfig",
    "HpDomain",
    "HpSpace",
    "ObjectiveError",
    "PhaseError",
    "REFERENCE_DATASETS",
    "RegretReport",
    "ResultRow",
    "RfRegressor",
    "Surface",
    "SurfaceFitError",
    "SurfaceKind",
    "Trial",
    "TrialLog",
    "balanced_accuracy",
    "baseline_score",
    "best_loss",
    "build_surface",
    "centralized_hpo_oracle",
    "collect_party_logs",
    "communication_bytes",
    "cv_loss",
    "derive_seed",
    "expected_improvement",
    "file_checksum",
    "final_fold_seed",
    "final_training",
    "fit",
    "fit_gp",
    "fit_rf",
    "flora_run",
    "holdout_accuracy",
    "ingest_csv",
    "label_skew_assignment",
    "make_synthetic",
    "minimize_surface",
    "partition",
    "partition_iid",
    "partition_label_skew",
    "party_folds",
    "party_id",
    "party_max_min",
    "predict_proba",
    "read_results_csv",
    "read_shard_csv",
    "regret_reports",
    "relative_regret",
    "render_markdown",
    "run_all_surfaces",
    "run_benchmark",
    "run_gp_ei",
    "run_random_search",
    "split_holdout",
    "summarize",
    "write_csv",
    "write_results_csv",
    "__version__",
]
