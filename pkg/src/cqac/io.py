"""Artifact writers.

Each artifact ``name.ext`` gets a sidecar ``name.ext.meta.json`` holding the
resolved run configuration, the package version, a creation timestamp and any
run notes. Timestamps never enter the artifact body, so bodies are
byte-reproducible for deterministic runs.
"""

from __future__ import annotations

import csv
import json
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import __version__

__all__ = [
    "BRANCH_COLUMNS",
    "COV_COLUMNS",
    "BENCH_COLUMNS",
    "PATH_COLUMNS",
    "write_csv",
    "write_json",
    "write_npz",
    "write_meta",
    "read_csv",
]

BRANCH_COLUMNS = ("index", "mu", "u_l2", "u_inf", "min_eig", "stable", "kind")
COV_COLUMNS = (
    "index",
    "mu",
    "cov_max_norm",
    "diag_l1",
    "diag_l2",
    "diag_linf",
    "iterations",
    "residual",
    "wall_time_s",
    "warm_started",
)
BENCH_COLUMNS = ("index", "mu", "solver", "iterations", "residual", "wall_time_s", "converged")
PATH_COLUMNS = ("t", "probe", "domain_max", "domain_min")
DIAG_COLUMNS = ("x", "y", "variance")


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, Path):
        return str(v)
    return v


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_meta(path: Path, config: Mapping | None, notes: Mapping | None = None) -> Path:
    meta = {
        "artifact": path.name,
        "package_version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config": config,
    }
    if notes:
        meta["notes"] = notes
    side = path.with_name(path.name + ".meta.json")
    side.write_text(json.dumps(_jsonable(meta), indent=2, sort_keys=False) + "\n")
    return side


def write_csv(
    path: str | Path,
    columns: Sequence[str],
    rows: Iterable[Sequence],
    config: Mapping | None = None,
    notes: Mapping | None = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row has {len(row)} fields, expected {len(columns)}")
            w.writerow([_fmt(v) for v in row])
    write_meta(path, config, notes)
    return path


def write_json(path: str | Path, payload: Mapping, config: Mapping | None = None, notes: Mapping | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2) + "\n")
    write_meta(path, config, notes)
    return path


def write_npz(path: str | Path, config: Mapping | None = None, **arrays) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(path, **arrays)
    write_meta(path, config)
    return path


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
