"""
Benchmarks: GBDT training, surface fitting and evaluation, trial-log and
manifest serialization.

Run:
  pytest tests/test_benchmark.py -v --benchmark-only
  pytest tests/test_benchmark.py -v --benchmark-only --benchmark-autosave
  pytest tests/test_benchmark.py -v --benchmark-only -k "small"
"""

import pytest

import flora
from flora import _toml
from tests.benchmark_data import (
    DATA_LARGE,
    DATA_MEDIUM,
    DATA_SMALL,
    LOGS_LARGE,
    LOGS_MEDIUM,
    LOGS_SMALL,
    MANIFEST_DOC,
    PARAMS,
    PROBES,
)


# --- GBDT ---

@pytest.mark.benchmark(group="small")
def test_bench_gbdt_fit_small(benchmark):
    """Fit 20 rounds on ~200 rows."""
    model = benchmark(flora.fit, PARAMS, DATA_SMALL)
    assert model.n_trees <= PARAMS.max_iter


@pytest.mark.benchmark(group="medium")
def test_bench_gbdt_fit_medium(benchmark):
    """Fit 20 rounds on ~2k rows."""
    model = benchmark(flora.fit, PARAMS, DATA_MEDIUM)
    assert model.n_trees <= PARAMS.max_iter


@pytest.mark.benchmark(group="large")
def test_bench_gbdt_fit_large(benchmark):
    """Fit 20 rounds on ~10k rows."""
    model = benchmark(flora.fit, PARAMS, DATA_LARGE)
    assert model.n_trees <= PARAMS.max_iter


# --- Surfaces ---

@pytest.mark.benchmark(group="small")
def test_bench_build_aplm_small(benchmark):
    """Fit per-party forests on 3 x 20 trials."""
    surface = benchmark(flora.build_surface, "aplm", LOGS_SMALL, flora.GBDT_SPACE)
    assert surface.n_parties == 3


@pytest.mark.benchmark(group="medium")
def test_bench_build_sgm_u_medium(benchmark):
    """GP grid selection on 300 merged trials."""
    surface = benchmark(flora.build_surface, "sgm-u", LOGS_MEDIUM, flora.GBDT_SPACE)
    assert surface.global_model is not None


@pytest.mark.benchmark(group="large")
def test_bench_evaluate_mplm_large(benchmark):
    """Evaluate a 10-party max surface on 256 probes."""
    surface = flora.build_surface("mplm", LOGS_LARGE, flora.GBDT_SPACE)
    values = benchmark(surface.evaluate_many, PROBES)
    assert values.shape == (256,)


# --- Serialization ---

@pytest.mark.benchmark(group="medium")
def test_bench_trial_log_csv_medium(benchmark):
    """Serialize one party's 100-trial log."""
    payload = benchmark(LOGS_MEDIUM[0].to_csv_bytes, flora.GBDT_SPACE)
    assert payload.count(b"\n") == 101


@pytest.mark.benchmark(group="large")
def test_bench_manifest_dumps_large(benchmark):
    """Write a 7-dataset resolved manifest."""
    text = benchmark(_toml.dumps, MANIFEST_DOC)
    assert text.count("[[datasets]]") == 7


@pytest.mark.benchmark(group="large")
def test_bench_manifest_loads_large(benchmark):
    """Parse a 7-dataset resolved manifest."""
    text = _toml.dumps(MANIFEST_DOC)
    doc = benchmark(_toml.loads, text)
    assert len(doc["datasets"]) == 7


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--benchmark-only"])
