"""
TOML reading and writing for manifests, partition records and chosen configs.

Reading goes through tomllib (tomli before Python 3.11). Writing is done here
because run manifests carry numpy scalars, enums and paths that generic
writers reject.
"""
from __future__ import annotations

import enum
import math
import re
from pathlib import Path
from typing import Any, Mapping

import numpy as np

try:
    import tomllib as _tomllib
except ImportError:  # Python 3.10
    import tomli as _tomllib

from ._errors import ConfigError

_BARE_KEY = re.compile(r"^[A-Za-z0-9_-]+$")


def _escape(s: str) -> str:
    out = []
    for c in s:
        if c == "\\":
            out.append("\\\\")
        elif c == '"':
            out.append('\\"')
        elif c == "\n":
            out.append("\\n")
        elif c == "\r":
            out.append("\\r")
        elif c == "\t":
            out.append("\\t")
        elif ord(c) < 0x20:
            out.append(f"\\u{ord(c):04x}")
        else:
            out.append(c)
    return "".join(out)


def _key(key: str) -> str:
    if _BARE_KEY.match(key):
        return key
    return '"' + _escape(key) + '"'


def _float(value: float) -> str:
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    # repr is the shortest string that round-trips; TOML needs a dot or exponent
    s = repr(value)
    if "." not in s and "e" not in s and "E" not in s:
        s += ".0"
    return s


def _scalar(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return _float(float(value))
    if isinstance(value, enum.Enum):
        return _scalar(value.value)
    if isinstance(value, Path):
        return '"' + _escape(value.as_posix()) + '"'
    if isinstance(value, str):
        return '"' + _escape(value) + '"'
    if value is None:
        raise TypeError("None has no TOML representation; omit the key instead")
    raise TypeError(f"Unsupported type for TOML: {type(value).__name__}")


def _is_table_array(value: Any) -> bool:
    return (
        isinstance(value, (list, tuple))
        and len(value) > 0
        and all(isinstance(x, Mapping) for x in value)
    )


def _inline(value: Any) -> str:
    if isinstance(value, Mapping):
        pairs = ", ".join(f"{_key(str(k))} = {_inline(v)}" for k, v in value.items())
        return "{" + pairs + "}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_inline(item) for item in value) + "]"
    return _scalar(value)


def _table_body(table: Mapping[str, Any], prefix: str) -> list[str]:
    lines: list[str] = []
    tables = []
    arrays = []
    for k, v in table.items():
        if v is None:
            continue
        if isinstance(v, Mapping):
            tables.append((k, v))
        elif _is_table_array(v):
            arrays.append((k, v))
        else:
            lines.append(f"{_key(str(k))} = {_inline(v)}")
    for k, v in tables:
        path = f"{prefix}.{_key(str(k))}" if prefix else _key(str(k))
        lines.append("")
        lines.append(f"[{path}]")
        lines.extend(_table_body(v, path))
    for k, v in arrays:
        path = f"{prefix}.{_key(str(k))}" if prefix else _key(str(k))
        for item in v:
            lines.append("")
            lines.append(f"[[{path}]]")
            lines.extend(_table_body(item, path))
    return lines


def dumps(obj: Mapping[str, Any]) -> str:
    """
    Serialize a mapping to a TOML document.

    Keys keep their insertion order; nested mappings become ``[tables]``,
    lists of mappings become ``[[arrays of tables]]`` and ``None`` values are
    skipped.

    Args:
        obj: Root table.

    Returns:
        TOML text ending with a newline.

    Raises:
        TypeError: If obj is not a mapping or holds an unsupported type.
    """
    if not isinstance(obj, Mapping):
        raise TypeError("dumps() requires a mapping")
    lines = _table_body(obj, "")
    while lines and lines[0] == "":
        lines.pop(0)
    return "\n".join(lines) + "\n"


def dump(obj: Mapping[str, Any], path: str | Path) -> None:
    """Write ``dumps(obj)`` to path (UTF-8, ``\\n`` line endings)."""
    Path(path).write_text(dumps(obj), encoding="utf-8", newline="\n")


def loads(s: str) -> dict:
    """Parse TOML text; syntax errors are reported as ConfigError."""
    try:
        return _tomllib.loads(s)
    except _tomllib.TOMLDecodeError as e:
        raise ConfigError(f"invalid TOML: {e}") from e


def load(path: str | Path) -> dict:
    """
    Parse a TOML file.

    Raises:
        ConfigError: If the file is missing or not valid TOML.
    """
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError as e:
        raise ConfigError(f"{p}: file not found") from e
    try:
        return loads(text)
    except ConfigError as e:
        raise ConfigError(f"{p}: {e}") from e
