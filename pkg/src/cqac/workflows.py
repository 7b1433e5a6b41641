"""Higher-level helpers that chain continuation, branch switching and sampling."""

from __future__ import annotations

import logging
import re
from typing import Iterable, Sequence

import numpy as np

from .detcont import (
    BRANCH_POINT,
    FOLD,
    Branch,
    ContinuationSettings,
    continue_branch,
    switch_branch,
    trivial_start,
)
from .grid import Grid2D

__all__ = ["branch_index", "compute_branches", "critical_mu", "critical_kind"]

log = logging.getLogger(__name__)

_LABEL = re.compile(r"^Gamma(\d+)$")


def branch_index(label: str) -> int:
    """``"Gamma0"`` -> 0, ``"Gamma2"`` -> 2."""
    m = _LABEL.match(label)
    if m is None:
        raise ValueError(f"branch label must look like 'Gamma<k>', got {label!r}")
    return int(m.group(1))


def compute_branches(
    grid: Grid2D,
    settings: ContinuationSettings,
    labels: Iterable[str] = ("Gamma0", "Gamma1", "Gamma2"),
    mu_start: float = 0.0,
) -> dict[str, Branch]:
    """Continue the homogeneous branch and the branches bifurcating at its branch points.

    ``Gamma<k>`` (k >= 1) is reached by switching at the k-th branch point of
    ``Gamma0`` and continuing in ``settings.direction``.
    """
    wanted = sorted({branch_index(lbl) for lbl in labels})
    out: dict[str, Branch] = {}
    gamma0 = continue_branch(trivial_start(grid, mu_start, settings), settings, grid, "Gamma0")
    out["Gamma0"] = gamma0
    bps = gamma0.singular_points(BRANCH_POINT)
    for k in wanted:
        if k == 0:
            continue
        if k > len(bps):
            raise ValueError(f"Gamma{k} requested but Gamma0 has only {len(bps)} branch points in range")
        start = switch_branch(bps[k - 1], grid, settings=settings)
        out[f"Gamma{k}"] = continue_branch(start, settings, grid, f"Gamma{k}")
    return {lbl: out[lbl] for lbl in ("Gamma0", *[f"Gamma{k}" for k in wanted]) if lbl in out}


def critical_kind(label: str) -> str:
    """Singularity that ends the stable part of a branch: branch point on Gamma0, fold otherwise."""
    return BRANCH_POINT if branch_index(label) == 0 else FOLD


def critical_mu(branch: Branch, kind: str | None = None) -> float:
    kind = kind or critical_kind(branch.label)
    pts = branch.singular_points(kind)
    if not pts:
        raise ValueError(f"{branch.label} has no {kind}")
    return pts[0].mu


def resolve_samples(values: Sequence[float], mu_crit: float | None, relative: bool) -> list[float]:
    vals = [float(v) for v in values]
    if relative:
        if mu_crit is None:
            raise ValueError("relative samples need a critical parameter value")
        vals = [mu_crit + v for v in vals]
    return vals


def linspace_samples(start: float, stop: float, num: int) -> list[float]:
    return [float(v) for v in np.linspace(start, stop, int(num))]
