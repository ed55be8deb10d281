"""Tests for the error hierarchy: every failure is a typed, informative exception."""

import numpy as np
import pytest

import flora
from flora import ConfigError, DataError, EncodingError, ObjectiveError, PhaseError, SurfaceFitError


@pytest.mark.parametrize("error,base", [
    (ConfigError, ValueError),
    (EncodingError, ConfigError),
    (DataError, ValueError),
    (SurfaceFitError, RuntimeError),
    (ObjectiveError, RuntimeError),
    (PhaseError, RuntimeError),
])
def test_hierarchy(error, base):
    assert issubclass(error, base)


def test_encoding_error_carries_domain():
    """EncodingError names the offending domain."""
    e = EncodingError("learning_rate", "value 2.0 above upper bound 1.0")
    assert e.domain == "learning_rate"
    assert "learning_rate" in str(e)


def test_phase_error_message_and_phase():
    """PhaseError prefixes the phase to the cause's message."""
    cause = DataError("class sizes too small")
    e = PhaseError("partition", cause)
    assert e.phase == "partition"
    assert str(e) == "partition: class sizes too small"


@pytest.mark.parametrize("call,error,fragment", [
    (lambda: flora.GbdtParams(max_iter=0), ConfigError, "max_iter"),
    (lambda: flora.GbdtParams(learning_rate=0.0), ConfigError, "learning_rate"),
    (lambda: flora.GbdtParams(min_samples_leaf=0), ConfigError, "min_samples_leaf"),
    (lambda: flora.GbdtParams(l2_regularization=-1.0), ConfigError, "l2_regularization"),
    (lambda: flora.GBDT_SPACE.decode([0.5] * 3), EncodingError, "length 4"),
    (lambda: flora.fit_rf(np.zeros((1, 4)), np.zeros(1)), ConfigError, ">= 2"),
    (lambda: flora.relative_regret(0.5, 0.6, 0.6), DataError, "no headroom"),
    (lambda: flora.party_max_min([]), DataError, "at least one"),
    (lambda: flora.FederationConfig(partition="shards"), ConfigError, "partition"),
    (lambda: flora.SurfaceKind.parse("mean"), ConfigError, "unknown surface kind"),
    (lambda: flora.cv_loss(flora.GbdtParams(), flora.Dataset(np.zeros((6, 1)), np.array([0, 0, 0, 0, 1, 1])), k=3),
     DataError, "use k <= 2"),
])
def test_error_messages(call, error, fragment):
    """Invalid input across the package raises a typed, descriptive error."""
    with pytest.raises(error, match=fragment):
        call()


def test_fit_rejects_single_class():
    """Training on one class is a data error."""
    data = flora.Dataset(np.zeros((4, 1)), np.zeros(4, dtype=int), name="flat")
    with pytest.raises(DataError, match="degenerate labels"):
        flora.fit(flora.GbdtParams(), data)
