"""Flat ``key=value`` configuration files."""

from __future__ import annotations

import os

from .errors import LoadError


def parse_key_values(text: str, source: str = "<string>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise LoadError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise LoadError(f"{source}:{lineno}: empty key")
        values[key.replace("-", "_")] = value
    return values


def read_key_values(path: str | os.PathLike) -> dict[str, str]:
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise LoadError(f"{path}: cannot read config ({exc.strerror})") from exc
    return parse_key_values(text, path)


def format_key_values(values: dict) -> str:
    lines = []
    for key in sorted(values):
        value = values[key]
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"
