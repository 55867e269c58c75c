"""Deterministic artifact writing shared by the CLI and bundle IO.

JSON artifacts are written with sorted keys; CSV artifacts start with a
single '#' comment line embedding the config hash, seed and toolkit version
(readers that dislike comments can skip the first line; pandas accepts
``comment='#'``). Identical inputs therefore produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays, tuples and Paths for json."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def canonical_dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":"),
                      allow_nan=False)


def config_hash(obj) -> str:
    """Stable hex digest of a resolved configuration."""
    return hashlib.sha256(canonical_dumps(obj).encode("utf-8")).hexdigest()


def write_json_artifact(path: "str | Path", obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n",
        encoding="utf-8",
    )


def provenance_comment(provenance: dict) -> str:
    return (f"# config_hash={provenance['config_hash']} "
            f"seed={provenance['seed']} version={provenance['version']}")


def write_csv_artifact(path: "str | Path", header: list, rows: list,
                       provenance: "dict | None" = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        if provenance is not None:
            fh.write(provenance_comment(provenance) + "\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else v for v in row])
