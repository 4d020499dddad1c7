"""Flat key=value configuration files and canonical config hashing.

One pair per line, ``#`` starts a comment, whitespace around the ``=`` is
ignored.  The canonical serialization (sorted keys, one ``k=v`` per line)
is what gets hashed, so two configs with the same content hash the same
regardless of ordering or comments.
"""
from __future__ import annotations

import hashlib
from pathlib import Path


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, val = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        out[key] = val.strip()
    return out


def load_config(path) -> dict[str, str]:
    return parse_config_text(Path(path).read_text())


def canonical_text(cfg: dict) -> str:
    return "".join(f"{k}={cfg[k]}\n" for k in sorted(cfg))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_text(cfg).encode()).hexdigest()


def save_config(cfg: dict, path) -> None:
    Path(path).write_text(canonical_text(cfg))


def merge(defaults: dict, file_cfg: dict | None, flags: dict | None) -> dict:
    """Resolution order: flag > config file > default."""
    out = dict(defaults)
    if file_cfg:
        out.update({k: v for k, v in file_cfg.items() if v is not None})
    if flags:
        out.update({k: v for k, v in flags.items() if v is not None})
    return out
