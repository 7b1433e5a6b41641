"""Diagnostics derived from stationary covariance matrices."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import ConditioningError

__all__ = [
    "CovNorms",
    "CovBounds",
    "ScalingFit",
    "cov_norms",
    "cov_bounds",
    "ellipsoid_membership",
    "fit_scaling",
]

NORM_FIELDS = ("max_norm", "diag_l1", "diag_l2", "diag_linf")


@dataclass(frozen=True)
class CovNorms:
    max_norm: float
    diag_l1: float
    diag_l2: float
    diag_linf: float

    def as_dict(self) -> dict:
        return asdict(self)

    def __getitem__(self, name: str) -> float:
        return getattr(self, name)


@dataclass(frozen=True)
class CovBounds:
    c_max: float
    c_min: float

    def __post_init__(self):
        if self.c_min > self.c_max:
            raise ValueError("c_min must not exceed c_max")


@dataclass(frozen=True)
class ScalingFit:
    kappa: float
    alpha: float
    window: tuple[float, float]
    mu_crit: float
    r_squared: float
    n_points: int

    def as_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def cov_norms(V) -> CovNorms:
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[0] != V.shape[1]:
        raise ValueError(f"V must be square, got shape {V.shape}")
    d = np.diag(V)
    return CovNorms(
        max_norm=float(np.max(np.abs(V), initial=0.0)),
        diag_l1=float(np.sum(np.abs(d))),
        diag_l2=float(np.linalg.norm(d)),
        diag_linf=float(np.max(np.abs(d), initial=0.0)),
    )


def cov_bounds(V) -> CovBounds:
    V = np.asarray(V, dtype=float)
    return CovBounds(c_max=float(V.max()), c_min=float(V.min()))


def ellipsoid_membership(V, p, p_star, r: float) -> bool:
    """Whether ``(p - p*)^T V^{-1} (p - p*) <= r^2``.

    Uses a Cholesky solve; a matrix that is not positive definite raises
    :class:`ConditioningError`.
    """
    V = np.asarray(V, dtype=float)
    d = np.asarray(p, dtype=float) - np.asarray(p_star, dtype=float)
    if d.shape != (V.shape[0],):
        raise ValueError("state dimension does not match V")
    try:
        c = sla.cho_factor(V, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"covariance is not positive definite: {exc}") from exc
    if np.min(np.abs(np.diag(c[0]))) ** 2 <= np.finfo(float).eps * np.max(np.abs(np.diag(V))):
        raise ConditioningError("covariance is numerically singular")
    q = float(d @ sla.cho_solve(c, d))
    return q <= r * r * (1 + 1e-12)


def fit_scaling(
    points: Iterable[tuple[float, float]],
    mu_crit: float,
    window: tuple[float, float] | None = None,
    exclude_closest: int = 2,
) -> ScalingFit:
    """Fit ``norm = kappa / |mu_crit - mu|^alpha`` by least squares in log-log coordinates.

    Points outside ``window`` (closed interval) are dropped first, then the
    ``exclude_closest`` points nearest ``mu_crit``.
    """
    pts = [(float(m), float(v)) for m, v in points]
    if window is not None:
        lo, hi = window
        pts = [(m, v) for m, v in pts if lo <= m <= hi]
    if exclude_closest:
        pts.sort(key=lambda mv: abs(mu_crit - mv[0]))
        pts = pts[exclude_closest:]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points for a scaling fit, got {len(pts)}")
    mu = np.array([m for m, _ in pts])
    val = np.array([v for _, v in pts])
    if np.any(val <= 0) or not np.all(np.isfinite(val)):
        raise ValueError("norm values must be positive and finite")
    dist = mu_crit - mu
    if np.any(dist == 0) or not (np.all(dist > 0) or np.all(dist < 0)):
        raise ValueError("all points must lie strictly on one side of mu_crit")
    x = np.log(np.abs(dist))
    y = np.log(val)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    return ScalingFit(
        kappa=float(math.exp(intercept)),
        alpha=float(-slope),
        window=(float(mu.min()), float(mu.max())),
        mu_crit=float(mu_crit),
        r_squared=r2,
        n_points=len(pts),
    )
