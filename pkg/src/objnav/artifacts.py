"""Deterministic artifact writing: canonical JSON, config hashes, provenance stamps."""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

FORMAT_VERSION = 1


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(obj) -> str:
    """Short SHA-256 of the canonical JSON form of ``obj``."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def stamp(seed: int, config) -> dict:
    return {"seed": int(seed), "config_hash": config_hash(config), "format_version": FORMAT_VERSION}


def dump_json(obj, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n")
    return path


def load_json(path: str | os.PathLike):
    return json.loads(Path(path).read_text())


def dump_jsonl(records, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for rec in records:
            fh.write(canonical_json(rec) + "\n")
    return path


def load_jsonl(path: str | os.PathLike) -> list:
    with Path(path).open() as fh:
        return [json.loads(line) for line in fh if line.strip()]
