"""
Hyper-parameter search spaces.

A space is an ordered list of integer or real domains, each on a linear or
log10 scale. Configurations are encoded into the unit hypercube by min-max
normalization in the transformed coordinate; every regressor and optimizer
in flora works on that encoding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterator, Literal, Mapping, Sequence

import numpy as np

from ._errors import ConfigError, EncodingError

Kind = Literal["int", "real"]
Scale = Literal["linear", "log"]


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class HpDomain:
    """
    One searched hyper-parameter.

    Attributes:
        name: Identifier, unique within a space.
        kind: ``"int"`` or ``"real"``.
        scale: ``"linear"`` or ``"log"`` (log10).
        lo: Inclusive lower bound in natural units.
        hi: Inclusive upper bound in natural units.
    """

    name: str
    kind: Kind
    scale: Scale
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not self.name:
            raise ConfigError("domain name must be non-empty")
        if self.kind not in ("int", "real"):
            raise ConfigError(f"{self.name}: type must be 'int' or 'real', got {self.kind!r}")
        if self.scale not in ("linear", "log"):
            raise ConfigError(f"{self.name}: space must be 'linear' or 'log', got {self.scale!r}")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ConfigError(f"{self.name}: range must be finite")
        if self.lo > self.hi:
            raise ConfigError(f"{self.name}: range ({self.lo}, {self.hi}) has lo > hi")
        if self.scale == "log" and self.lo <= 0:
            raise ConfigError(f"{self.name}: log-scaled range needs lo > 0")
        if self.kind == "int":
            if not (float(self.lo).is_integer() and float(self.hi).is_integer()):
                raise ConfigError(f"{self.name}: integer domain needs integer bounds")
            object.__setattr__(self, "lo", int(self.lo))
            object.__setattr__(self, "hi", int(self.hi))
        else:
            object.__setattr__(self, "lo", float(self.lo))
            object.__setattr__(self, "hi", float(self.hi))

    def _t(self, v: float) -> float:
        return math.log10(v) if self.scale == "log" else float(v)

    def _t_inv(self, t: float) -> float:
        return 10.0 ** t if self.scale == "log" else t

    def _finish(self, v: float) -> int | float:
        if self.kind == "int":
            return min(max(_round_half_up(v), self.lo), self.hi)
        return min(max(v, self.lo), self.hi)

    def encode(self, value: float) -> float:
        if not self.lo <= value <= self.hi:
            raise EncodingError(self.name, f"value {value!r} outside range ({self.lo}, {self.hi})")
        t_lo, t_hi = self._t(self.lo), self._t(self.hi)
        if t_hi == t_lo:
            return 0.0
        return (self._t(value) - t_lo) / (t_hi - t_lo)

    def decode(self, x: float) -> int | float:
        if not 0.0 <= x <= 1.0:
            raise EncodingError(self.name, f"coordinate {x!r} outside [0, 1]")
        t_lo, t_hi = self._t(self.lo), self._t(self.hi)
        return self._finish(self._t_inv(t_lo + x * (t_hi - t_lo)))

    def sample(self, rng: np.random.Generator) -> int | float:
        t = rng.uniform(self._t(self.lo), self._t(self.hi))
        return self._finish(self._t_inv(float(t)))

    def violations(self, value: Any, relaxed: bool = False) -> list[str]:
        if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
            return [f"{self.name}: value {value!r} is not a number"]
        if not math.isfinite(value):
            return [f"{self.name}: value {value!r} is not finite"]
        out = []
        lo = self.lo
        if relaxed and self.kind == "real" and self.scale == "log":
            lo = 0.0
        if value < lo:
            out.append(f"{self.name}: value {value!r} below lower bound {lo}")
        if value > self.hi:
            out.append(f"{self.name}: value {value!r} above upper bound {self.hi}")
        if self.kind == "int" and not float(value).is_integer():
            out.append(f"{self.name}: value {value!r} is not an integer")
        return out

    def to_api_config(self) -> dict[str, Any]:
        return {"type": self.kind, "space": self.scale, "range": [self.lo, self.hi]}


class HpConfig(Mapping[str, Any]):
    """
    Immutable mapping from domain name to value in natural units.

    Integer-valued entries are stored as ``int``, everything else as
    ``float``.
    """

    __slots__ = ("_values",)

    def __init__(self, values: Mapping[str, Any] | None = None, **kwargs: Any) -> None:
        merged = dict(values or {}, **kwargs)
        clean: dict[str, Any] = {}
        for k, v in merged.items():
            if isinstance(v, (bool, np.bool_)):
                clean[k] = v
            elif isinstance(v, (int, np.integer)):
                clean[k] = int(v)
            elif isinstance(v, (float, np.floating)):
                clean[k] = float(v)
            else:
                clean[k] = v
        object.__setattr__(self, "_values", clean)

    def __setattr__(self, name: str, value: Any) -> None:
        raise AttributeError("HpConfig is immutable")

    def __getitem__(self, key: str) -> Any:
        return self._values[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __hash__(self) -> int:
        return hash(tuple(sorted(self._values.items())))

    def __repr__(self) -> str:
        body = ", ".join(f"{k}={v!r}" for k, v in self._values.items())
        return f"HpConfig({body})"


class HpSpace:
    """
    Ordered collection of domains; the order fixes the encoding layout.

    Example:
        >>> space = HpSpace([HpDomain("learning_rate", "real", "log", 1e-3, 1.0)])
        >>> space.encode(HpConfig(learning_rate=10 ** -1.5))
        array([0.5])
    """

    def __init__(self, domains: Sequence[HpDomain]) -> None:
        if not domains:
            raise ConfigError("search space needs at least one domain")
        seen = set()
        for d in domains:
            if d.name in seen:
                raise ConfigError(f"duplicate domain name: {d.name}")
            seen.add(d.name)
        self._domains = tuple(domains)
        self._by_name = {d.name: d for d in self._domains}

    @classmethod
    def from_api_config(cls, api_config: Mapping[str, Mapping[str, Any]]) -> "HpSpace":
        """
        Build a space from ``{name: {'type', 'space', 'range'}}`` declarations.

        Raises:
            ConfigError: On missing fields or invalid bounds.
        """
        domains = []
        for name, decl in api_config.items():
            try:
                kind = decl["type"]
                scale = decl.get("space", "linear")
                lo, hi = decl["range"]
            except (KeyError, TypeError, ValueError) as e:
                raise ConfigError(
                    f"{name}: expected 'type', 'space' and a two-element 'range'"
                ) from e
            domains.append(HpDomain(name, kind, scale, lo, hi))
        return cls(domains)

    def to_api_config(self) -> dict[str, dict[str, Any]]:
        return {d.name: d.to_api_config() for d in self._domains}

    @property
    def domains(self) -> tuple[HpDomain, ...]:
        return self._domains

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self._domains)

    @property
    def dim(self) -> int:
        return len(self._domains)

    def __getitem__(self, name: str) -> HpDomain:
        return self._by_name[name]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, HpSpace) and self._domains == other._domains

    def __hash__(self) -> int:
        return hash(self._domains)

    def __repr__(self) -> str:
        body = ", ".join(f"{d.name}[{d.lo}, {d.hi}]{'(log)' if d.scale == 'log' else ''}" for d in self._domains)
        return f"HpSpace({body})"

    def sample(self, rng: np.random.Generator) -> HpConfig:
        """Draw one configuration, uniform in each domain's transformed coordinate."""
        return HpConfig({d.name: d.sample(rng) for d in self._domains})

    def sample_many(self, n: int, rng: np.random.Generator) -> list[HpConfig]:
        return [self.sample(rng) for _ in range(n)]

    def encode(self, config: Mapping[str, Any]) -> np.ndarray:
        """
        Map a configuration to ``[0, 1]^d`` in domain order.

        Raises:
            EncodingError: If a value is missing or outside its range.
        """
        out = np.empty(self.dim)
        for i, d in enumerate(self._domains):
            if d.name not in config:
                raise EncodingError(d.name, "missing from configuration")
            out[i] = d.encode(config[d.name])
        return out

    def encode_many(self, configs: Sequence[Mapping[str, Any]]) -> np.ndarray:
        if not configs:
            return np.empty((0, self.dim))
        return np.vstack([self.encode(c) for c in configs])

    def decode(self, x: Sequence[float] | np.ndarray) -> HpConfig:
        """
        Inverse of encode; integer domains are rounded half-up then clamped.

        Raises:
            EncodingError: If x has the wrong length or a coordinate outside [0, 1].
        """
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise EncodingError("<vector>", f"expected length {self.dim}, got shape {x.shape}")
        return HpConfig({d.name: d.decode(float(xi)) for d, xi in zip(self._domains, x)})

    def validate(self, config: Mapping[str, Any], relaxed: bool = False) -> list[str]:
        """
        List every violated constraint (missing/extra key, range, integrality).

        With ``relaxed=True`` a log-scaled real domain also admits 0, which is
        how fixed evaluation-only configurations (the expert baseline) are
        checked. An empty list means the configuration is valid.
        """
        problems = []
        for d in self._domains:
            if d.name not in config:
                problems.append(f"{d.name}: missing")
            else:
                problems.extend(d.violations(config[d.name], relaxed=relaxed))
        for key in config:
            if key not in self._by_name:
                problems.append(f"{key}: not a domain of this space")
        return problems


GBDT_SPACE = HpSpace.from_api_config({
    "max_iter": {"type": "int", "space": "linear", "range": (10, 200)},
    "learning_rate": {"type": "real", "space": "log", "range": (1e-3, 1.0)},
    "min_samples_leaf": {"type": "int", "space": "linear", "range": (1, 40)},
    "l2_regularization": {"type": "real", "space": "log", "range": (1e-4, 1.0)},
})

# Expert default; l2_regularization = 0 lies outside the searched log range,
# so it only passes relaxed validation and is never encoded.
BASELINE_CONFIG = HpConfig(
    max_iter=100,
    learning_rate=0.1,
    min_samples_leaf=20,
    l2_regularization=0.0,
)
