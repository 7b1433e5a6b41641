"""Truncated spectral Q-Wiener noise and its diffusion matrix.

The noise has eigenvalues ``lambda_k = sigma_tilde * exp(-phi_k / 10)`` acting
on Dirichlet sine modes of the rectangle. Modes are ranked by the continuous
Dirichlet eigenvalue ``pi^2 (k1^2/(4 Lx^2) + k2^2/(4 Ly^2))`` with ties broken by
the smaller ``k1``. Mode values are sampled at the interior nodes and are not
L2-normalized (``||e_k||^2 = Lx * Ly``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import Grid2D

__all__ = [
    "G_KINDS",
    "NoiseSpec",
    "NoiseMatrix",
    "eigenvalues",
    "rank_modes",
    "eigenfunction_samples",
    "amplitude",
    "assemble_B",
    "mode_matrix",
    "spec_from_rule",
]

G_KINDS = ("additive", "quad_sup", "sup_shift")


@dataclass(frozen=True)
class NoiseSpec:
    sigma_tilde: float
    phi: tuple[float, ...]
    g_kind: str = "additive"
    mode_table: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        phi = tuple(float(p) for p in np.atleast_1d(self.phi))
        object.__setattr__(self, "phi", phi)
        if self.sigma_tilde < 0:
            raise ValueError(f"sigma_tilde must be non-negative, got {self.sigma_tilde}")
        if not phi:
            raise ValueError("phi must contain at least one entry")
        if any(p < 0 for p in phi) or any(b < a for a, b in zip(phi, phi[1:])):
            raise ValueError("phi must be non-negative and non-decreasing")
        if self.g_kind not in G_KINDS:
            raise ValueError(f"g_kind must be one of {G_KINDS}, got {self.g_kind!r}")
        if self.mode_table is not None:
            table = tuple((int(a), int(b)) for a, b in self.mode_table)
            if len(table) != len(phi):
                raise ValueError("mode_table length must equal K")
            if len(set(table)) != len(table):
                raise ValueError("mode_table entries must be distinct")
            if any(a < 1 or b < 1 for a, b in table):
                raise ValueError("mode indices must be >= 1")
            object.__setattr__(self, "mode_table", table)

    @property
    def K(self) -> int:
        return len(self.phi)

    @classmethod
    def linear(cls, sigma_tilde: float, K: int, g_kind: str = "additive") -> "NoiseSpec":
        """``phi_k = k``."""
        return cls(sigma_tilde, tuple(float(k) for k in range(1, K + 1)), g_kind)

    @classmethod
    def affine(cls, sigma_tilde: float, K: int, slope: float, offset: float = 0.0, g_kind: str = "additive") -> "NoiseSpec":
        """``phi_k = slope * (k - 1) + offset``."""
        return cls(sigma_tilde, tuple(slope * (k - 1) + offset for k in range(1, K + 1)), g_kind)

    def scaled(self, factor: float) -> "NoiseSpec":
        """Same spectrum shape with ``sigma_tilde`` multiplied by ``factor``."""
        return NoiseSpec(self.sigma_tilde * factor, self.phi, self.g_kind, self.mode_table)

    def modes(self, grid: Grid2D) -> tuple[tuple[int, int], ...]:
        return self.mode_table if self.mode_table is not None else rank_modes(grid, self.K)


@dataclass(frozen=True, eq=False)
class NoiseMatrix:
    B: np.ndarray
    grid: Grid2D
    spec: NoiseSpec

    @property
    def shape(self):
        return self.B.shape


def eigenvalues(spec: NoiseSpec) -> np.ndarray:
    return spec.sigma_tilde * np.exp(-np.asarray(spec.phi) / 10.0)


def rank_modes(grid: Grid2D, K: int) -> tuple[tuple[int, int], ...]:
    if K < 1:
        raise ValueError("K must be >= 1")
    # the K pairs (k, 1), k <= K, already beat any pair with k1 > K or k2 > K
    ax = 1.0 / (4 * grid.Lx**2)
    ay = 1.0 / (4 * grid.Ly**2)
    pairs = [(k1, k2) for k1 in range(1, K + 1) for k2 in range(1, K + 1)]
    pairs.sort(key=lambda p: (round(np.pi**2 * (p[0] ** 2 * ax + p[1] ** 2 * ay), 10), p[0]))
    return tuple(pairs[:K])


def eigenfunction_samples(k1: int, k2: int, grid: Grid2D) -> np.ndarray:
    if k1 < 1 or k2 < 1:
        raise ValueError("mode indices must be >= 1")
    X, Y = grid.coordinates()
    return np.sin(np.pi * k1 * (X + grid.Lx) / (2 * grid.Lx)) * np.sin(np.pi * k2 * (Y + grid.Ly) / (2 * grid.Ly))


def mode_matrix(spec: NoiseSpec, grid: Grid2D) -> np.ndarray:
    """``J x K`` matrix with columns ``sqrt(lambda_k) e_k`` (the additive ``B``)."""
    lam = eigenvalues(spec)
    cols = [np.sqrt(l) * eigenfunction_samples(k1, k2, grid) for l, (k1, k2) in zip(lam, spec.modes(grid))]
    return np.column_stack(cols)


def amplitude(u_star, g_kind: str):
    """Noise amplitude ``G(u*)``: a scalar for additive/quad_sup, a field for sup_shift."""
    u_star = np.asarray(u_star, dtype=float)
    if g_kind == "additive":
        return 1.0
    sup = float(np.max(np.abs(u_star), initial=0.0))
    if g_kind == "quad_sup":
        return 0.5 * sup**2
    if g_kind == "sup_shift":
        return sup - u_star
    raise ValueError(f"unknown g_kind {g_kind!r}")


def assemble_B(u_star, spec: NoiseSpec, grid: Grid2D) -> NoiseMatrix:
    u_star = grid.check_field(u_star, "u_star")
    G = amplitude(u_star, spec.g_kind)
    E = mode_matrix(spec, grid)
    B = E * (np.asarray(G)[:, None] if np.ndim(G) else G)
    return NoiseMatrix(B=B, grid=grid, spec=spec)


def spec_from_rule(sigma_tilde: float, K: int, phi_rule: str | Sequence, g_kind: str = "additive") -> NoiseSpec:
    """Build a spec from a ``phi_rule``: ``"linear_k"``, ``("affine", a, b)`` or an explicit list."""
    if isinstance(phi_rule, str):
        if phi_rule == "linear_k":
            return NoiseSpec.linear(sigma_tilde, K, g_kind)
        raise ValueError(f"unknown phi_rule {phi_rule!r}")
    rule = list(phi_rule)
    if rule and rule[0] == "affine":
        if len(rule) != 3:
            raise ValueError("affine phi_rule needs two coefficients: ['affine', slope, offset]")
        return NoiseSpec.affine(sigma_tilde, K, float(rule[1]), float(rule[2]), g_kind)
    if len(rule) != K:
        raise ValueError(f"explicit phi has {len(rule)} entries but K={K}")
    return NoiseSpec(sigma_tilde, tuple(float(v) for v in rule), g_kind)
