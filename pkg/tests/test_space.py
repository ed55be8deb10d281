"""Tests for search-space encoding, decoding, sampling and validation."""

import math

import numpy as np
import pytest

import flora
from flora import BASELINE_CONFIG, GBDT_SPACE, EncodingError, HpConfig, HpDomain, HpSpace


def test_gbdt_space_layout():
    """The default space has four domains in a fixed order."""
    assert GBDT_SPACE.names == ("max_iter", "learning_rate", "min_samples_leaf", "l2_regularization")
    assert GBDT_SPACE.dim == 4
    assert GBDT_SPACE["learning_rate"].scale == "log"


def test_encode_log_midpoint():
    """The geometric midpoint of a log domain encodes to 0.5."""
    space = HpSpace([HpDomain("learning_rate", "real", "log", 1e-3, 1.0)])
    assert space.encode(HpConfig(learning_rate=10 ** -1.5))[0] == pytest.approx(0.5, abs=1e-12)


def test_encode_bounds_map_to_unit_corners():
    """Lower bounds encode to 0 and upper bounds to 1."""
    lo = HpConfig(max_iter=10, learning_rate=1e-3, min_samples_leaf=1, l2_regularization=1e-4)
    hi = HpConfig(max_iter=200, learning_rate=1.0, min_samples_leaf=40, l2_regularization=1.0)
    assert np.allclose(GBDT_SPACE.encode(lo), 0.0, atol=1e-12)
    assert np.allclose(GBDT_SPACE.encode(hi), 1.0, atol=1e-12)


def test_decode_encode_round_trip():
    """Integers come back exactly, reals to floating-point precision."""
    rng = np.random.default_rng(0)
    for config in GBDT_SPACE.sample_many(200, rng):
        back = GBDT_SPACE.decode(GBDT_SPACE.encode(config))
        assert back["max_iter"] == config["max_iter"]
        assert back["min_samples_leaf"] == config["min_samples_leaf"]
        assert back["learning_rate"] == pytest.approx(config["learning_rate"], rel=1e-12)
        assert back["l2_regularization"] == pytest.approx(config["l2_regularization"], rel=1e-12)


def test_decode_rounds_half_up():
    """Integer domains round half up on decode."""
    space = HpSpace([HpDomain("n", "int", "linear", 0, 10)])
    assert space.decode([0.25])["n"] == 3  # 2.5 -> 3
    assert space.decode([0.24])["n"] == 2
    assert space.decode([1.0])["n"] == 10


def test_samples_are_valid_and_typed():
    """Samples are valid, with ints for integer domains."""
    rng = np.random.default_rng(1)
    for config in GBDT_SPACE.sample_many(500, rng):
        assert GBDT_SPACE.validate(config) == []
        assert isinstance(config["max_iter"], int)
        assert isinstance(config["learning_rate"], float)


def test_log_sampling_is_uniform_in_exponent():
    """Half of log-uniform samples fall below the geometric midpoint."""
    space = HpSpace([HpDomain("lr", "real", "log", 1e-4, 1.0)])
    rng = np.random.default_rng(2)
    exps = np.log10([c["lr"] for c in space.sample_many(4000, rng)])
    assert abs(np.mean(exps) + 2.0) < 0.05
    assert abs(np.mean(exps < -3.0) - 0.25) < 0.03


def test_sampling_is_seed_deterministic():
    a = GBDT_SPACE.sample_many(5, np.random.default_rng(9))
    b = GBDT_SPACE.sample_many(5, np.random.default_rng(9))
    assert a == b


def test_degenerate_domain_encodes_to_zero():
    """A domain with lo == hi always samples its value and encodes to 0."""
    space = HpSpace([HpDomain("fixed", "real", "linear", 0.5, 0.5)])
    assert space.encode({"fixed": 0.5})[0] == 0.0
    assert space.decode([0.7])["fixed"] == 0.5


def test_baseline_needs_relaxed_validation():
    """The expert default is valid only under the relaxed rule."""
    problems = GBDT_SPACE.validate(BASELINE_CONFIG)
    assert problems and "l2_regularization" in problems[0]
    assert GBDT_SPACE.validate(BASELINE_CONFIG, relaxed=True) == []


def test_validate_reports_every_problem():
    """Every violation is listed, not just the first."""
    config = {"max_iter": 5.5, "learning_rate": 2.0, "min_samples_leaf": 3, "extra": 1}
    problems = GBDT_SPACE.validate(config)
    text = "\n".join(problems)
    assert "max_iter" in text and "not an integer" in text
    assert "learning_rate" in text and "above upper bound" in text
    assert "l2_regularization: missing" in text
    assert "extra: not a domain" in text


@pytest.mark.parametrize("config,domain", [
    ({"max_iter": 5, "learning_rate": 0.1, "min_samples_leaf": 1, "l2_regularization": 0.1}, "max_iter"),
    ({"max_iter": 50, "learning_rate": 0.1, "min_samples_leaf": 1, "l2_regularization": 0.0}, "l2_regularization"),
    ({"max_iter": 50, "learning_rate": 0.1, "min_samples_leaf": 1}, "l2_regularization"),
])
def test_encode_out_of_range_names_domain(config, domain):
    """Encoding an out-of-range value names the domain."""
    with pytest.raises(EncodingError) as exc_info:
        GBDT_SPACE.encode(config)
    assert exc_info.value.domain == domain
    assert domain in str(exc_info.value)


def test_decode_rejects_bad_vectors():
    """Wrong lengths and coordinates outside [0, 1] are rejected."""
    with pytest.raises(EncodingError, match="expected length 4"):
        GBDT_SPACE.decode([0.5, 0.5])
    with pytest.raises(EncodingError, match="outside"):
        GBDT_SPACE.decode([0.5, 1.5, 0.5, 0.5])


def test_api_config_round_trip():
    """The declaration format reads back to the same space."""
    api = GBDT_SPACE.to_api_config()
    assert api["learning_rate"] == {"type": "real", "space": "log", "range": [0.001, 1.0]}
    assert HpSpace.from_api_config(api) == GBDT_SPACE


@pytest.mark.parametrize("decl", [
    {"x": {"type": "float", "space": "linear", "range": [0, 1]}},
    {"x": {"type": "real", "space": "ln", "range": [0, 1]}},
    {"x": {"type": "real", "space": "log", "range": [0, 1]}},
    {"x": {"type": "real", "space": "linear", "range": [1, 0]}},
    {"x": {"type": "int", "space": "linear", "range": [0.5, 3]}},
    {"x": {"type": "real", "space": "linear", "range": [0, math.inf]}},
    {"x": {"type": "real", "range": [0]}},
    {"x": {"space": "linear", "range": [0, 1]}},
    {},
])
def test_invalid_space_declarations_raise(decl):
    """Malformed domain declarations raise ConfigError."""
    with pytest.raises(flora.ConfigError):
        HpSpace.from_api_config(decl)


def test_duplicate_domain_names_raise():
    d = HpDomain("a", "int", "linear", 0, 1)
    with pytest.raises(flora.ConfigError, match="duplicate"):
        HpSpace([d, d])


def test_config_is_immutable_and_hashable():
    """Configurations cannot be changed and can key a dict."""
    config = HpConfig(max_iter=np.int64(5), learning_rate=np.float32(0.5))
    assert type(config["max_iter"]) is int
    assert type(config["learning_rate"]) is float
    assert hash(config) == hash(HpConfig(max_iter=5, learning_rate=0.5))
    with pytest.raises(AttributeError):
        config.x = 1
