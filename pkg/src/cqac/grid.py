"""Finite-difference discretization of the cubic-quintic Allen-Cahn operator.

The rectangle ``[-Lx, Lx] x [-Ly, Ly]`` carries a regular mesh with ``M`` and
``N`` subdivisions. Only the ``J = (M-1)(N-1)`` interior nodes are unknowns
(homogeneous Dirichlet data is eliminated). Interior nodes are numbered with
``m`` running fastest::

    j = (m - 1) + (n - 1) * (M - 1),    1 <= m <= M-1, 1 <= n <= N-1

so ``j`` is 0-based and a field reshapes to ``(M-1, N-1)`` with Fortran order.

The steady-state system is

    residual(u; mu) = Lap_h u + 4 (mu u + u^3 - u^5)

with the destabilizing sign on the linear term, which puts the first branch
point of the trivial state at ``nu_1 / 4``.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Grid2D",
    "IrregularGridWarning",
    "build_grid",
    "assemble_laplacian",
    "reaction",
    "reaction_derivative",
    "residual",
    "jacobian",
    "stencil_eigenvalue",
    "stencil_eigenvector",
]


class IrregularGridWarning(UserWarning):
    """Raised (as a warning) when ``hx != hy``."""


@dataclass(frozen=True)
class Grid2D:
    Lx: float
    Ly: float
    M: int
    N: int

    def __post_init__(self):
        if not (self.Lx > 0 and self.Ly > 0):
            raise ValueError(f"domain half-widths must be positive, got Lx={self.Lx}, Ly={self.Ly}")
        for name in ("M", "N"):
            val = getattr(self, name)
            if isinstance(val, bool) or int(val) != val or val < 2:
                raise ValueError(f"{name} must be an integer >= 2, got {val!r}")
            object.__setattr__(self, name, int(val))
        object.__setattr__(self, "Lx", float(self.Lx))
        object.__setattr__(self, "Ly", float(self.Ly))

    @property
    def hx(self) -> float:
        return 2 * self.Lx / self.M

    @property
    def hy(self) -> float:
        return 2 * self.Ly / self.N

    @property
    def J(self) -> int:
        return (self.M - 1) * (self.N - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.M - 1, self.N - 1)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def is_regular(self) -> bool:
        return bool(np.isclose(self.hx, self.hy, rtol=1e-12, atol=0.0))

    @property
    def x(self) -> np.ndarray:
        """Interior x-coordinates ``x_m``, m = 1..M-1."""
        return -self.Lx + self.hx * np.arange(1, self.M)

    @property
    def y(self) -> np.ndarray:
        return -self.Ly + self.hy * np.arange(1, self.N)

    def index(self, m: int, n: int) -> int:
        if not (1 <= m <= self.M - 1 and 1 <= n <= self.N - 1):
            raise IndexError(f"({m}, {n}) is not an interior node")
        return (m - 1) + (n - 1) * (self.M - 1)

    def node(self, j: int) -> tuple[int, int]:
        if not 0 <= j < self.J:
            raise IndexError(f"node index {j} out of range [0, {self.J})")
        n, m = divmod(j, self.M - 1)
        return m + 1, n + 1

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened ``(x_j, y_j)`` for all interior nodes in index order."""
        X, Y = np.meshgrid(self.x, self.y, indexing="ij")
        return X.ravel(order="F"), Y.ravel(order="F")

    def to_array(self, field: np.ndarray) -> np.ndarray:
        """Reshape a length-J field to ``(M-1, N-1)`` indexed ``[m-1, n-1]``."""
        return np.asarray(field).reshape(self.shape, order="F")

    def from_array(self, arr: np.ndarray) -> np.ndarray:
        return np.asarray(arr).ravel(order="F")

    def center_index(self) -> int:
        """Index of the interior node closest to the domain centre."""
        X, Y = self.coordinates()
        return int(np.argmin(X**2 + Y**2))

    def l2_norm(self, field: np.ndarray) -> float:
        """Discrete L2(D) norm ``sqrt(hx*hy*sum(u_j^2))``."""
        return float(np.sqrt(self.cell_area * np.dot(field, field)))

    def check_field(self, field, name: str = "field") -> np.ndarray:
        arr = np.asarray(field, dtype=float)
        if arr.shape != (self.J,):
            raise ValueError(f"{name} has shape {arr.shape}, expected ({self.J},)")
        return arr


def build_grid(Lx: float, Ly: float, M: int, N: int) -> Grid2D:
    """Construct the interior-node grid; warns when the mesh is not square."""
    grid = Grid2D(Lx, Ly, M, N)
    if not grid.is_regular:
        warnings.warn(
            f"irregular mesh: hx={grid.hx:.6g} differs from hy={grid.hy:.6g}",
            IrregularGridWarning,
            stacklevel=2,
        )
    return grid


def _second_difference(n_interior: int, h: float) -> sp.csr_matrix:
    main = np.full(n_interior, -2.0 / h**2)
    off = np.full(n_interior - 1, 1.0 / h**2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


@functools.lru_cache(maxsize=16)
def assemble_laplacian(grid: Grid2D) -> sp.csr_matrix:
    """Five-point Dirichlet Laplacian on the interior nodes (CSR, symmetric).

    The result is cached per grid; treat it as read-only.
    """
    Dx = _second_difference(grid.M - 1, grid.hx)
    Dy = _second_difference(grid.N - 1, grid.hy)
    Ix = sp.identity(grid.M - 1, format="csr")
    Iy = sp.identity(grid.N - 1, format="csr")
    lap = (sp.kron(Iy, Dx) + sp.kron(Dy, Ix)).tocsr()
    lap.sort_indices()
    return lap


def reaction(u, mu):
    u = np.asarray(u, dtype=float)
    u2 = u * u
    return 4.0 * u * (mu + u2 - u2 * u2)


def reaction_derivative(u, mu):
    """Pointwise ``d/du`` of :func:`reaction`: ``4(mu + 3u^2 - 5u^4)``."""
    u2 = np.asarray(u, dtype=float) ** 2
    return 4.0 * (mu + 3.0 * u2 - 5.0 * u2 * u2)


def _check_dims(u, lap):
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or lap.shape != (u.size, u.size):
        raise ValueError(f"operator of shape {lap.shape} does not match field of length {u.size}")
    return u


def residual(u, mu, lap) -> np.ndarray:
    u = _check_dims(u, lap)
    return lap @ u + reaction(u, mu)


def jacobian(u, mu, lap) -> sp.csr_matrix:
    u = _check_dims(u, lap)
    return (lap + sp.diags(reaction_derivative(u, mu), 0, format="csr")).tocsr()


def stencil_eigenvalue(grid: Grid2D, k1: int, k2: int) -> float:
    """Eigenvalue of ``-Lap_h`` for the discrete sine mode ``(k1, k2)``."""
    return float(
        4.0 / grid.hx**2 * np.sin(k1 * np.pi / (2 * grid.M)) ** 2
        + 4.0 / grid.hy**2 * np.sin(k2 * np.pi / (2 * grid.N)) ** 2
    )


def stencil_eigenvector(grid: Grid2D, k1: int, k2: int) -> np.ndarray:
    m = np.arange(1, grid.M)
    n = np.arange(1, grid.N)
    return np.outer(np.sin(k1 * np.pi * m / grid.M), np.sin(k2 * np.pi * n / grid.N)).ravel(order="F")
