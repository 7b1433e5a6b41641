"""Euler-Maruyama sampling of the discretized stochastic cqAC system.

Paths follow ``dp = theta(p; mu) dt + sigma(p) dbeta`` where ``sigma(p)`` is the
``J x K`` diffusion matrix of :func:`cqac.noise.assemble_B`. With
``drift="linear"`` the drift is replaced by its linearization ``A (p - p*)``
around a steady state and the diffusion is frozen at ``sigma(p*)``, which gives
exactly the Ornstein-Uhlenbeck process whose stationary covariance solves the
Lyapunov equation.

Random increments come from one counter-based (Philox) stream per
``(path, mode)`` pair keyed by ``(seed, path_index, k)``, so results do not
depend on how many paths are simulated together.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .analysis import CovBounds
from .errors import DivergenceError
from .grid import Grid2D, assemble_laplacian, jacobian, reaction
from .noise import NoiseSpec, amplitude, mode_matrix

__all__ = [
    "PathStats",
    "TimeStepWarning",
    "euler_maruyama",
    "euler_maruyama_ensemble",
    "explicit_euler",
    "containment_check",
    "pooled_variance",
    "stability_bound",
]

_CHUNK = 1024


class TimeStepWarning(UserWarning):
    pass


@dataclass(eq=False)
class PathStats:
    t: np.ndarray
    probe: np.ndarray
    domain_max: np.ndarray
    domain_min: np.ndarray
    seed: int
    dt: float
    probe_index: int
    path_index: int = 0
    drift: str = "full"
    exit_fraction: float | None = None
    final_state: np.ndarray | None = field(default=None, repr=False)

    @property
    def T(self) -> float:
        return float(self.t[-1])

    def variance(self, t_min: float = 0.0) -> float:
        """Sample variance of the probe trace over ``t >= t_min``."""
        x = self.probe[self.t >= t_min]
        return float(np.var(x, ddof=1))

    def summary(self, transient_cut: float) -> dict:
        return {
            "seed": self.seed,
            "path_index": self.path_index,
            "dt": self.dt,
            "T": self.T,
            "drift": self.drift,
            "probe_index": self.probe_index,
            "exit_fraction": self.exit_fraction,
            "stationary_variance_estimate": self.variance(transient_cut),
        }


def stability_bound(grid: Grid2D) -> float:
    """Explicit-Euler step limit ``hx^2 hy^2 / (2 (hx^2 + hy^2))`` for the Laplacian."""
    hx2, hy2 = grid.hx**2, grid.hy**2
    return hx2 * hy2 / (2 * (hx2 + hy2))


def _streams(seed: int, path_indices: Sequence[int], K: int):
    return [
        [np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(int(p), k)))) for k in range(K)]
        for p in path_indices
    ]


def euler_maruyama_ensemble(
    p0,
    mu: float,
    spec: NoiseSpec,
    dt: float,
    T: float,
    seed: int,
    grid: Grid2D,
    path_indices: Sequence[int] = (0,),
    probe: int | None = None,
    drift: str = "full",
    p_star=None,
    divergence_guard: float = 1e6,
) -> list[PathStats]:
    """Integrate several independent paths in lock-step; one :class:`PathStats` each."""
    if dt <= 0 or T <= 0:
        raise ValueError("need dt > 0 and T > 0")
    if drift not in ("full", "linear"):
        raise ValueError(f"drift must be 'full' or 'linear', got {drift!r}")
    p0 = grid.check_field(p0, "p0")
    if dt > stability_bound(grid):
        warnings.warn(
            f"dt={dt:g} exceeds the explicit stability bound {stability_bound(grid):.3g}", TimeStepWarning, stacklevel=2
        )
    probe = grid.center_index() if probe is None else int(probe)
    paths = list(path_indices)
    P = len(paths)
    lap = assemble_laplacian(grid)
    E = mode_matrix(spec, grid)
    K = E.shape[1]
    nsteps = max(1, int(round(T / dt)))
    sqdt = math.sqrt(dt)

    if drift == "linear":
        ps = p0 if p_star is None else grid.check_field(p_star, "p_star")
        A = jacobian(ps, mu, lap)
        G = amplitude(ps, spec.g_kind)
        B = E * (np.asarray(G)[:, None] if np.ndim(G) else G)

        def theta(p):
            return A @ (p - ps[:, None])

        def noise(p, xi):
            return B @ xi

    else:

        def theta(p):
            return lap @ p + reaction(p, mu)

        if spec.g_kind == "additive":

            def noise(p, xi):
                return E @ xi

        elif spec.g_kind == "quad_sup":

            def noise(p, xi):
                return (E @ xi) * (0.5 * np.max(np.abs(p), axis=0) ** 2)

        else:

            def noise(p, xi):
                return (E @ xi) * (np.max(np.abs(p), axis=0) - p)

    gens = _streams(seed, paths, K)
    p = np.repeat(p0[:, None], P, axis=1)
    t = dt * np.arange(nsteps + 1)
    probe_tr = np.empty((nsteps + 1, P))
    dmax = np.empty((nsteps + 1, P))
    dmin = np.empty((nsteps + 1, P))
    probe_tr[0] = p[probe]
    dmax[0] = p.max(axis=0)
    dmin[0] = p.min(axis=0)
    xi_buf = np.empty((K, P, _CHUNK))
    for n in range(nsteps):
        c = n % _CHUNK
        if c == 0:
            for j, row in enumerate(gens):
                for k, g in enumerate(row):
                    xi_buf[k, j] = g.standard_normal(_CHUNK)
        p = p + dt * theta(p) + sqdt * noise(p, xi_buf[:, :, c])
        probe_tr[n + 1] = p[probe]
        dmax[n + 1] = p.max(axis=0)
        dmin[n + 1] = p.min(axis=0)
        if max(abs(dmax[n + 1]).max(), abs(dmin[n + 1]).max()) > divergence_guard or not np.all(
            np.isfinite(dmax[n + 1])
        ):
            raise DivergenceError(f"path blew up at t={t[n + 1]:g}", time=float(t[n + 1]))
    return [
        PathStats(
            t=t,
            probe=probe_tr[:, j].copy(),
            domain_max=dmax[:, j].copy(),
            domain_min=dmin[:, j].copy(),
            seed=seed,
            dt=dt,
            probe_index=probe,
            path_index=paths[j],
            drift=drift,
            final_state=p[:, j].copy(),
        )
        for j in range(P)
    ]


def euler_maruyama(
    p0,
    mu: float,
    spec: NoiseSpec,
    dt: float,
    T: float,
    seed: int,
    grid: Grid2D,
    probe: int | None = None,
    path_index: int = 0,
    drift: str = "full",
    p_star=None,
) -> PathStats:
    """Single Euler-Maruyama path; see :func:`euler_maruyama_ensemble`."""
    return euler_maruyama_ensemble(
        p0, mu, spec, dt, T, seed, grid, (path_index,), probe=probe, drift=drift, p_star=p_star
    )[0]


def explicit_euler(p0, mu: float, dt: float, T: float, grid: Grid2D) -> np.ndarray:
    """Deterministic explicit Euler trajectory, shape ``(nsteps + 1, J)``."""
    p = grid.check_field(p0, "p0")[:, None].copy()
    lap = assemble_laplacian(grid)
    nsteps = max(1, int(round(T / dt)))
    out = np.empty((nsteps + 1, grid.J))
    out[0] = p[:, 0]
    for n in range(nsteps):
        p = p + dt * (lap @ p + reaction(p, mu))
        out[n + 1] = p[:, 0]
    return out


def containment_check(stats: PathStats, bounds: CovBounds, transient_cut: float) -> float:
    """Fraction of retained steps (``t >= transient_cut``) with the domain extrema outside the bounds."""
    if transient_cut >= stats.T:
        raise ValueError("transient_cut must be smaller than the path length")
    keep = stats.t >= transient_cut
    out = (stats.domain_max[keep] > bounds.c_max) | (stats.domain_min[keep] < bounds.c_min)
    frac = float(np.mean(out))
    stats.exit_fraction = frac
    return frac


def pooled_variance(stats: Sequence[PathStats], t_min: float) -> tuple[float, float]:
    """Mean of per-path stationary variance estimates and its standard error."""
    v = np.array([s.variance(t_min) for s in stats])
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
    return float(v.mean()), se
