"""JSON-Lines replay logs: a schema-versioned header then one record per step.

The header carries the schema version, the configuration and its hash so a
log is self-describing; `replay_read` verifies both and reports the last
valid line when a file is truncated or corrupt. With timing disabled the
recorded compute times are 0.0, so identical (config, seed) runs produce
byte-identical files.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import config_hash

SCHEMA_VERSION = 1


class ReplayError(RuntimeError):
    def __init__(self, message: str, last_valid_line: Optional[int] = None):
        super().__init__(message)
        self.last_valid_line = last_valid_line


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


class ReplayWriter:
    def __init__(self, path, config: dict):
        self.path = path
        self._f = open(path, "w")
        header = {"schema": SCHEMA_VERSION, "config_hash": config_hash(config),
                  "config": config}
        self._f.write(json.dumps(header, sort_keys=True) + "\n")

    def write_record(self, record: dict):
        self._f.write(json.dumps(_jsonable(record), sort_keys=True) + "\n")

    def close(self):
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def replay_write(path, config: dict, records) -> None:
    with ReplayWriter(path, config) as w:
        for rec in records:
            w.write_record(rec)


def replay_read(path) -> tuple[dict, list[dict]]:
    """Read and validate a replay file; returns (header, records)."""
    if not os.path.exists(path):
        raise ReplayError(f"replay file not found: {path}")
    records = []
    header = None
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            if not line.endswith("\n") and line.strip() == "":
                break
            try:
                data = json.loads(line)
            except json.JSONDecodeError:
                raise ReplayError(
                    f"corrupt replay line {lineno}; last valid line is {lineno - 1}",
                    last_valid_line=lineno - 1) from None
            if lineno == 1:
                if not isinstance(data, dict) or "schema" not in data:
                    raise ReplayError("missing replay header", last_valid_line=0)
                if data["schema"] != SCHEMA_VERSION:
                    raise ReplayError(
                        f"unsupported replay schema {data['schema']!r} "
                        f"(expected {SCHEMA_VERSION})", last_valid_line=0)
                if config_hash(data["config"]) != data["config_hash"]:
                    raise ReplayError("config hash mismatch in replay header",
                                      last_valid_line=0)
                header = data
            else:
                records.append(data)
    if header is None:
        raise ReplayError("empty replay file", last_valid_line=0)
    return header, records
