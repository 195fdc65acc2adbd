"""Textual key = value config files shared by the CLI-facing modules.

Grammar: one `key = value` pair per line, blank lines and #-comments
ignored, keys unique. Values stay strings here; the coerce_* helpers
pull typed fields out of the parsed dict with optional defaults.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError, IoError

_MISSING = object()


def parse_kv_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def parse_kv_file(path: str | Path) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    return parse_kv_text(text)


def _lookup(fields: dict[str, str], key: str, default):
    if key in fields:
        return fields[key]
    if default is _MISSING:
        raise ConfigError(f"missing required config key {key!r}")
    return None


def coerce_float(fields: dict[str, str], key: str, default=_MISSING) -> float:
    raw = _lookup(fields, key, default)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: not a number: {raw!r}") from exc


def coerce_int(fields: dict[str, str], key: str, default=_MISSING) -> int:
    raw = _lookup(fields, key, default)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: not an integer: {raw!r}") from exc


def coerce_float_list(fields: dict[str, str], key: str, default=_MISSING) -> list[float]:
    raw = _lookup(fields, key, default)
    if raw is None:
        return default
    try:
        return [float(tok) for tok in raw.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: not a number list: {raw!r}") from exc
