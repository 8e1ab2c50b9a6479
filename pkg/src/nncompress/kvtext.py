"""Canonical ``key=value`` text used for configs, artifact headers and CLI output.

Writing is canonical: keys sorted, one pair per line, floats written with
``repr`` so they parse back bit-exactly.  Reading tolerates blank lines and
``#`` comments.
"""

from __future__ import annotations

import numpy as np


class KVError(ValueError):
    pass


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, str):
        if "\n" in value or "\r" in value:
            raise KVError("values may not contain newlines")
        return value
    if isinstance(value, np.ndarray) or isinstance(value, (list, tuple)):
        return ",".join(format_value(v) for v in value)
    raise KVError(f"cannot format value of type {type(value).__name__}")


def dumps(pairs: dict) -> str:
    lines = []
    for key in sorted(pairs):
        if not key or "=" in key or key != key.strip():
            raise KVError(f"invalid key {key!r}")
        lines.append(f"{key}={format_value(pairs[key])}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise KVError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in out:
            raise KVError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def load(path) -> dict[str, str]:
    with open(path, encoding="utf-8") as f:
        return loads(f.read())


def dump(pairs: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps(pairs))


def parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise KVError(f"not a boolean: {text!r}")


def parse_floats(text: str) -> np.ndarray:
    text = text.strip()
    if not text:
        return np.zeros(0, dtype=np.float64)
    try:
        return np.array([float(v) for v in text.split(",")], dtype=np.float64)
    except ValueError as exc:
        raise KVError(f"bad float list: {exc}") from None


def parse_ints(text: str) -> list[int]:
    text = text.strip()
    if not text:
        return []
    try:
        return [int(v) for v in text.split(",")]
    except ValueError as exc:
        raise KVError(f"bad integer list: {exc}") from None
