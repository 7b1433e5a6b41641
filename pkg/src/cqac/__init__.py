"""Continuation of steady states and stationary covariances for the 2D cubic-quintic Allen-Cahn SPDE.

Modules
-------
grid       finite-difference mesh, Dirichlet Laplacian, reaction term, residual and Jacobian
detcont    pseudo-arclength continuation, singularity location and branch switching
noise      truncated spectral Q-Wiener noise and the diffusion matrix B
lyapunov   Krylov solvers for A V + V A^T + B B^T = 0 along a branch
analysis   covariance norms, confidence bounds and scaling-law fits
mc         Euler-Maruyama sampling of the full stochastic system
cli        command-line front end (``cqac`` / ``python -m cqac``)
"""

__version__ = "0.1.0"

from .analysis import CovBounds, CovNorms, ScalingFit, cov_bounds, cov_norms, ellipsoid_membership, fit_scaling
from .detcont import (
    Branch,
    BranchPoint,
    ContinuationSettings,
    bifurcation_summary,
    continue_branch,
    locate_singularity,
    newton_correct,
    sample_branch,
    stability_eig,
    switch_branch,
    trivial_start,
)
from .errors import (
    ConditioningError,
    ConvergenceError,
    CqacError,
    DivergenceError,
    InstabilityError,
    SingularityError,
    StallError,
    StepSizeError,
)
from .grid import Grid2D, assemble_laplacian, build_grid, jacobian, reaction, residual
from .lyapunov import (
    CovarianceSolution,
    LinearSolverConfig,
    continue_covariance,
    integrate_cov_ode,
    lyap_apply,
    solve_lyapunov,
    spectral_oracle,
)
from .mc import PathStats, containment_check, euler_maruyama
from .noise import NoiseMatrix, NoiseSpec, amplitude, assemble_B, eigenfunction_samples, eigenvalues, rank_modes

__all__ = [
    "__version__",
    "Grid2D",
    "build_grid",
    "assemble_laplacian",
    "reaction",
    "residual",
    "jacobian",
    "ContinuationSettings",
    "BranchPoint",
    "Branch",
    "newton_correct",
    "trivial_start",
    "continue_branch",
    "locate_singularity",
    "switch_branch",
    "stability_eig",
    "sample_branch",
    "bifurcation_summary",
    "NoiseSpec",
    "NoiseMatrix",
    "eigenvalues",
    "rank_modes",
    "eigenfunction_samples",
    "amplitude",
    "assemble_B",
    "LinearSolverConfig",
    "CovarianceSolution",
    "lyap_apply",
    "solve_lyapunov",
    "spectral_oracle",
    "integrate_cov_ode",
    "continue_covariance",
    "CovNorms",
    "CovBounds",
    "ScalingFit",
    "cov_norms",
    "cov_bounds",
    "ellipsoid_membership",
    "fit_scaling",
    "PathStats",
    "euler_maruyama",
    "containment_check",
    "CqacError",
    "ConvergenceError",
    "StallError",
    "SingularityError",
    "InstabilityError",
    "StepSizeError",
    "DivergenceError",
    "ConditioningError",
]
