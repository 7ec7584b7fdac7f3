"""Plain-text ``key=value`` settings files (one per line, ``#`` comments)."""

from __future__ import annotations

from dataclasses import fields, replace

from .tensor import ConfigError

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def format_kv(values: dict) -> str:
    return "".join(f"{k}={_render(v)}\n" for k, v in values.items())


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(key: str, kind: str, value: str):
    try:
        if kind == "bool":
            low = value.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(value)
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {kind}") from None
    return value


def typed_update(cfg, values: dict[str, str]):
    """Return ``cfg`` with string ``values`` converted to each field's type.

    Unknown keys raise ConfigError.
    """
    kinds = {f.name: str(f.type) for f in fields(cfg)}
    unknown = sorted(set(values) - set(kinds))
    if unknown:
        raise ConfigError(f"unknown setting(s) {', '.join(unknown)} for {type(cfg).__name__}")
    return replace(cfg, **{k: _convert(k, kinds[k], v) for k, v in values.items()})
