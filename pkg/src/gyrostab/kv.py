"""Flat key=value text format used by parameter files, sidecar metadata and configs.

Format rules:
  - UTF-8 text, one ``key = value`` pair per line.
  - '#' starts a comment (full line or trailing).
  - Blank lines ignored.
  - Keys may contain dots for section prefixes (``plant.file``).
  - Duplicate keys are an error (silent override hides config mistakes).
"""

from __future__ import annotations

import os


class KvError(ValueError):
    """Malformed key=value content (bad line, duplicate or unknown key)."""


def parse_kv(text: str, source: str = "<string>") -> dict[str, str]:
    """Parse key=value text into an ordered dict of raw string values."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise KvError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise KvError(f"{source}:{lineno}: empty key")
        if key in out:
            raise KvError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_kv_file(path: str | os.PathLike) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_kv(fh.read(), source=str(path))


def write_kv_file(path: str | os.PathLike, items: dict[str, str], header: str = "") -> None:
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    lines.extend(f"{k} = {v}" for k, v in items.items())
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def reject_unknown(found: dict[str, str], allowed: set[str], source: str) -> None:
    unknown = sorted(set(found) - allowed)
    if unknown:
        raise KvError(f"{source}: unknown keys: {', '.join(unknown)}")


def require_keys(found: dict[str, str], required: set[str], source: str) -> None:
    missing = sorted(required - set(found))
    if missing:
        raise KvError(f"{source}: missing keys: {', '.join(missing)}")


def parse_float(found: dict[str, str], key: str, source: str) -> float:
    try:
        return float(found[key])
    except ValueError as exc:
        raise KvError(f"{source}: key {key!r}: not a number: {found[key]!r}") from exc
