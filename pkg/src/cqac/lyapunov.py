"""Stationary covariances of the linearized SODE via Lyapunov equations.

For a stable steady state with Jacobian ``A`` and diffusion matrix ``B`` the
stationary covariance solves ``A V + V A^T + B B^T = 0``. Vectorized column by
column this is the linear system ``[I (x) A + A (x) I] vec(V) = -vec(B B^T)``;
here the same map is applied matrix-free as two sparse-dense products.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import krylov
from .analysis import CovNorms, cov_norms
from .detcont import Branch, stability_eig
from .errors import ConvergenceError, InstabilityError, StepSizeError
from .grid import assemble_laplacian, jacobian
from .noise import NoiseSpec, assemble_B

__all__ = [
    "LinearSolverConfig",
    "CovarianceSolution",
    "CovarianceBranch",
    "lyap_apply",
    "kronecker_matrix",
    "solve_lyapunov",
    "solve_lyapunov_dense",
    "spectral_oracle",
    "integrate_cov_ode",
    "continue_covariance",
]

log = logging.getLogger(__name__)

METHODS = ("bicgstab", "gmres", "qmr")


@dataclass(frozen=True)
class LinearSolverConfig:
    method: str = "bicgstab"
    tol: float = 1e-4
    maxit: int = 200
    gmres_restart: int = 10

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.maxit < 1:
            raise ValueError("maxit must be >= 1")
        if self.gmres_restart < 0:
            raise ValueError("gmres_restart must be >= 0")

    @property
    def solver_id(self) -> str:
        if self.method == "gmres":
            return f"gmres({self.gmres_restart})"
        return self.method


@dataclass(eq=False)
class CovarianceSolution:
    V: np.ndarray | None
    iterations: int
    residual: float
    wall_time_s: float
    solver_id: str
    mu: float = math.nan
    warm_started: bool = False
    converged: bool = True
    index: int = -1
    norms: CovNorms | None = None
    diag: np.ndarray | None = None
    c_max: float = math.nan
    c_min: float = math.nan

    def summarize(self, keep_matrix: bool = True) -> "CovarianceSolution":
        """Fill norms, diagonal and extreme entries; optionally drop ``V``."""
        if self.V is not None:
            self.norms = cov_norms(self.V)
            self.diag = np.diag(self.V).copy()
            self.c_max = float(self.V.max())
            self.c_min = float(self.V.min())
            if not keep_matrix:
                self.V = None
        return self


@dataclass
class CovarianceBranch:
    solutions: list[CovarianceSolution] = field(default_factory=list)
    skipped: list[tuple[int, float, str]] = field(default_factory=list)

    def __iter__(self):
        return iter(self.solutions)

    def __len__(self):
        return len(self.solutions)

    @property
    def mu(self) -> np.ndarray:
        return np.array([s.mu for s in self.solutions])


def _as_operator(A):
    return A if sp.issparse(A) else np.asarray(A, dtype=float)


def lyap_apply(A, V: np.ndarray) -> np.ndarray:
    """``A V + V A^T`` using two products with ``A``."""
    V = np.asarray(V, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or V.shape != (n, n):
        raise ValueError(f"dimension mismatch: A {A.shape}, V {V.shape}")
    AV = A @ V
    out = np.asarray(A @ V.T).T
    out += AV
    return out


def _lyap_apply_sym(A, V: np.ndarray) -> np.ndarray:
    # A symmetric and V symmetric: A V + V A^T = A V + (A V)^T, exactly symmetric
    AV = A @ V
    AV += AV.T.copy()
    return AV


def _is_symmetric(M) -> bool:
    if sp.issparse(M):
        return (M != M.T).nnz == 0
    M = np.asarray(M)
    return bool(np.array_equal(M, M.T))


def kronecker_matrix(A) -> np.ndarray:
    """Explicit ``I (x) A + A (x) I`` (dense; intended for small ``J``)."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    n = A.shape[0]
    if n > 50:
        raise ValueError(f"explicit Kronecker assembly is limited to J <= 50, got {n}")
    I = np.eye(n)
    return np.kron(I, A) + np.kron(A, I)


def solve_lyapunov_dense(A, B) -> np.ndarray:
    """Direct solve of the vectorized system; column-major ``vec``."""
    A_dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    n = A_dense.shape[0]
    rhs = -(B @ B.T).ravel(order="F")
    v = np.linalg.solve(kronecker_matrix(A_dense), rhs)
    return v.reshape((n, n), order="F")


def _largest_real_eig(A) -> float:
    n = A.shape[0]
    if n <= 200:
        dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        return float(np.max(np.linalg.eigvals(dense).real))
    return stability_eig(A)


def solve_lyapunov(
    A,
    B,
    cfg: LinearSolverConfig | None = None,
    warm_start: np.ndarray | None = None,
    mu: float = math.nan,
    check_stability: bool = True,
) -> CovarianceSolution:
    """Solve ``A V + V A^T = -B B^T`` iteratively from ``warm_start`` (or zero).

    Large ``A`` are assumed symmetric for the Hurwitz check. Raises
    :class:`InstabilityError` if ``A`` is not Hurwitz and
    :class:`ConvergenceError` (with the best iterate) if the solver stalls.
    """
    cfg = cfg or LinearSolverConfig()
    A = _as_operator(A)
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != A.shape[0]:
        raise ValueError(f"B has shape {B.shape}, expected ({A.shape[0]}, K)")
    if check_stability:
        lead = _largest_real_eig(A)
        if lead >= 0:
            raise InstabilityError(f"A is not Hurwitz (leading eigenvalue {lead:.4g})")
    rhs = -(B @ B.T)
    rhs = 0.5 * (rhs + rhs.T)
    sym = _is_symmetric(A) and (warm_start is None or _is_symmetric(warm_start))
    apply = _lyap_apply_sym if sym else lyap_apply

    def op(V):
        return apply(A, V)

    def op_adj(V):
        return lyap_apply(A.T, V)

    t0 = time.perf_counter()
    if cfg.method == "bicgstab":
        V, info = krylov.bicgstab(op, rhs, warm_start, cfg.tol, cfg.maxit)
    elif cfg.method == "gmres":
        V, info = krylov.gmres(op, rhs, warm_start, cfg.tol, cfg.maxit, cfg.gmres_restart)
    else:
        V, info = krylov.qmr(op, rhs, warm_start, cfg.tol, cfg.maxit, AT=op_adj)
    V = 0.5 * (V + V.T)
    elapsed = time.perf_counter() - t0
    return CovarianceSolution(
        V=V,
        iterations=info.iterations,
        residual=info.residual,
        wall_time_s=elapsed,
        solver_id=cfg.solver_id,
        mu=mu,
        warm_started=warm_start is not None,
    )


def spectral_oracle(A, B) -> np.ndarray:
    """Exact stationary covariance from the eigendecomposition of symmetric ``A``.

    ``V = W [ (W^T B B^T W)_ij / (-a_i - a_j) ] W^T``.
    """
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    scale = max(np.abs(A).max(), 1.0)
    if np.abs(A - A.T).max() > 1e-12 * scale:
        raise ValueError("spectral_oracle requires a symmetric matrix")
    a, W = np.linalg.eigh(A)
    if a.max() >= 0:
        raise InstabilityError(f"A is not Hurwitz (leading eigenvalue {a.max():.4g})")
    C = W.T @ np.asarray(B, dtype=float)
    C = C @ C.T
    C /= -(a[:, None] + a[None, :])
    V = W @ C @ W.T
    return 0.5 * (V + V.T)


def _rk4_limit(A) -> float:
    """Upper bound on the spectral radius of the Lyapunov operator (Gershgorin)."""
    A = sp.csr_matrix(A)
    return 2.0 * float(np.max(np.asarray(abs(A).sum(axis=1)).ravel(), initial=0.0))


def integrate_cov_ode(A, B, T: float, dt: float) -> np.ndarray:
    """Classical RK4 for ``dV/dt = A V + V A^T + B B^T`` with ``V(0) = 0``.

    The last step is shortened so the integration ends exactly at ``T``.
    Raises :class:`StepSizeError` when ``dt`` exceeds the RK4 stability
    interval for the Gershgorin bound of the operator, or the iterate blows up.
    """
    if dt <= 0 or T < 0:
        raise ValueError("need dt > 0 and T >= 0")
    A = _as_operator(A)
    B = np.asarray(B, dtype=float)
    n = A.shape[0]
    V = np.zeros((n, n))
    if T == 0:
        return V
    rho = _rk4_limit(A)
    if dt * rho > 2.785:
        raise StepSizeError(f"dt={dt:g} exceeds the RK4 stability limit {2.785 / rho:.3g}")
    Q = B @ B.T
    nsteps = max(1, math.ceil(T / dt - 1e-12))
    h = T / nsteps

    def f(X):
        out = lyap_apply(A, X)
        out += Q
        return out

    for step in range(nsteps):
        k1 = f(V)
        k2 = f(V + 0.5 * h * k1)
        k3 = f(V + 0.5 * h * k2)
        k4 = f(V + h * k3)
        V = V + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(V)):
            raise StepSizeError(f"RK4 iterate blew up at t={(step + 1) * h:g}")
    return 0.5 * (V + V.T)


def continue_covariance(
    branch: Branch,
    spec: NoiseSpec,
    cfg: LinearSolverConfig | None = None,
    keep_matrices: bool = False,
    warm: bool = True,
) -> CovarianceBranch:
    """Solve the Lyapunov equation at every stable point of ``branch`` in order.

    Each solve starts from the previous solution (zero for the first point).
    Unstable and singular points are skipped with a reason; solver failures are
    recorded as unconverged solutions and the continuation proceeds from the
    best iterate.
    """
    cfg = cfg or LinearSolverConfig()
    grid = branch.grid
    lap = assemble_laplacian(grid)
    out = CovarianceBranch()
    V_prev = None
    for i, pt in enumerate(branch.points):
        if not pt.stable:
            out.skipped.append((i, pt.mu, "unstable: no stationary covariance"))
            continue
        A = jacobian(pt.state, pt.mu, lap)
        B = assemble_B(pt.state, spec, grid).B
        try:
            sol = solve_lyapunov(A, B, cfg, warm_start=V_prev if warm else None, mu=pt.mu, check_stability=False)
        except ConvergenceError as exc:
            log.warning("Lyapunov solve failed at mu=%.6g: %s", pt.mu, exc)
            V = exc.iterate
            sol = CovarianceSolution(
                V=0.5 * (V + V.T),
                iterations=cfg.maxit,
                residual=exc.residual,
                wall_time_s=math.nan,
                solver_id=cfg.solver_id,
                mu=pt.mu,
                warm_started=V_prev is not None,
                converged=False,
            )
        sol.index = i
        V_prev = sol.V
        out.solutions.append(sol.summarize(keep_matrix=keep_matrices))
    return out
