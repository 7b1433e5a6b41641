"""Pseudo-arclength continuation of steady states of the discretized cqAC equation.

Points on a branch are pairs ``x = (u, mu)`` with ``u`` a length-J field. The
arclength metric weights the state by the cell area, i.e. it is the discrete
``L2(D) x R`` inner product, so step sizes do not depend on the mesh size.
Tangents are unit vectors in that metric.

Stability is monitored through the few largest eigenvalues of the (symmetric)
Jacobian. A sign change of the tangent's mu-component marks a fold; a sign
change of one of the monitored eigenvalues without a fold marks a branch point.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .errors import ConvergenceError, SingularityError, StallError
from .grid import Grid2D, assemble_laplacian, jacobian, reaction, residual

__all__ = [
    "ContinuationSettings",
    "BranchPoint",
    "Branch",
    "newton_correct",
    "make_point",
    "trivial_start",
    "continue_branch",
    "locate_singularity",
    "switch_branch",
    "stability_eig",
    "top_eigenvalues",
    "sample_branch",
    "bifurcation_summary",
    "parameter_regime",
]

log = logging.getLogger(__name__)

REGULAR, FOLD, BRANCH_POINT = "regular", "fold", "branch_point"


@dataclass(frozen=True)
class ContinuationSettings:
    step: float = 0.05
    min_step: float = 1e-6
    max_step: float = 0.1
    newton_tol: float = 1e-10
    newton_maxit: int = 12
    max_points: int = 400
    direction: int = 1
    eig_tol: float = 1e-12
    n_eigs: int = 4
    mu_min: float = -math.inf
    mu_max: float = math.inf
    locate: bool = True
    singularity_tol: float = 1e-6
    kick: float = 0.1

    def __post_init__(self):
        if not 0 < self.min_step <= self.step <= self.max_step:
            raise ValueError(
                f"need 0 < min_step <= step <= max_step, got {self.min_step}, {self.step}, {self.max_step}"
            )
        if self.direction not in (1, -1):
            raise ValueError(f"direction must be +1 or -1, got {self.direction}")
        if self.newton_tol <= 0 or self.newton_maxit < 1 or self.max_points < 1 or self.n_eigs < 1:
            raise ValueError("newton_tol, newton_maxit, max_points and n_eigs must be positive")


@dataclass(frozen=True, eq=False)
class BranchPoint:
    state: np.ndarray
    mu: float
    tangent: np.ndarray
    min_stability_eig: float
    """Largest eigenvalue of the Jacobian; the point is stable iff it is negative."""
    eigs: np.ndarray = field(default_factory=lambda: np.empty(0))
    kind: str = REGULAR
    failed_switch: bool = False

    @property
    def stable(self) -> bool:
        return bool(self.min_stability_eig < 0)

    @property
    def x(self) -> np.ndarray:
        return np.append(self.state, self.mu)

    def residual_norm(self, grid: Grid2D) -> float:
        return float(np.max(np.abs(residual(self.state, self.mu, assemble_laplacian(grid))), initial=0.0))


@dataclass(eq=False)
class Branch:
    points: list[BranchPoint]
    grid: Grid2D
    label: str = ""
    settings: ContinuationSettings = field(default_factory=ContinuationSettings)

    def __len__(self) -> int:
        return len(self.points)

    def __getitem__(self, i) -> BranchPoint:
        return self.points[i]

    def __iter__(self) -> Iterator[BranchPoint]:
        return iter(self.points)

    @property
    def mu(self) -> np.ndarray:
        return np.array([p.mu for p in self.points])

    def l2_norms(self) -> np.ndarray:
        return np.array([self.grid.l2_norm(p.state) for p in self.points])

    def singular_points(self, kind: str | None = None) -> list[BranchPoint]:
        return [p for p in self.points if p.kind != REGULAR and (kind is None or p.kind == kind)]

    def stable_points(self) -> list[BranchPoint]:
        return [p for p in self.points if p.stable]


# ---------------------------------------------------------------------------
# linear algebra helpers


def _weight(grid: Grid2D) -> float:
    return grid.cell_area


def _wdot(grid: Grid2D, a: np.ndarray, b: np.ndarray) -> float:
    w = _weight(grid)
    return float(w * np.dot(a[:-1], b[:-1]) + a[-1] * b[-1])


def _wnorm(grid: Grid2D, a: np.ndarray) -> float:
    return math.sqrt(max(_wdot(grid, a, a), 0.0))


def _bordered(grid: Grid2D, u: np.ndarray, mu: float, tangent: np.ndarray) -> sp.csc_matrix:
    """``[[A, d_mu F], [w t_u^T, t_mu]]`` for the pseudo-arclength system."""
    A = jacobian(u, mu, assemble_laplacian(grid))
    col = 4.0 * u
    row = _weight(grid) * tangent[:-1]
    return sp.bmat(
        [[A, sp.csr_matrix(col[:, None])], [sp.csr_matrix(row[None, :]), np.array([[tangent[-1]]])]],
        format="csc",
    )


def _splu(mat: sp.spmatrix):
    try:
        return spla.splu(sp.csc_matrix(mat))
    except RuntimeError as exc:  # exactly singular
        raise ConvergenceError(f"sparse LU failed: {exc}") from exc


def _tangent(grid: Grid2D, u: np.ndarray, mu: float, reference: np.ndarray) -> np.ndarray:
    lu = _splu(_bordered(grid, u, mu, reference))
    rhs = np.zeros(u.size + 1)
    rhs[-1] = 1.0
    t = lu.solve(rhs)
    if not np.all(np.isfinite(t)):
        raise ConvergenceError("tangent solve produced non-finite values")
    t /= _wnorm(grid, t)
    if _wdot(grid, t, reference) < 0:
        t = -t
    return t


def _gershgorin_upper(A) -> float:
    A = sp.csr_matrix(A)
    d = A.diagonal()
    absrow = np.asarray(abs(A).sum(axis=1)).ravel()
    return float(np.max(d + (absrow - np.abs(d))))


def top_eigenvalues(A, k: int = 4, tol: float = 1e-12) -> np.ndarray:
    """The ``k`` largest eigenvalues of symmetric ``A``, in descending order.

    Small systems use a dense solver; larger ones use shift-invert Lanczos
    (ARPACK) with a shift above the Gershgorin bound, so the eigenvalues
    nearest the shift are the largest ones.
    """
    n = A.shape[0]
    k = min(k, n)
    if n <= 400:
        dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        return np.sort(np.linalg.eigvalsh(dense))[::-1][:k]
    sigma = _gershgorin_upper(A) + 1.0
    try:
        vals = spla.eigsh(sp.csc_matrix(A), k=k, sigma=sigma, which="LM", tol=tol, return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError(
            "eigenvalue iteration did not converge", iterate=exc.eigenvalues, history=list(exc.eigenvalues)
        ) from exc
    return np.sort(vals)[::-1]


def stability_eig(A, tol: float = 1e-12) -> float:
    """Largest eigenvalue of the symmetric matrix ``A``."""
    return float(top_eigenvalues(A, 1, tol)[0])


def _null_vector(A, tol: float = 1e-12) -> tuple[float, np.ndarray]:
    """Eigenpair of symmetric ``A`` with eigenvalue closest to zero.

    Raises :class:`SingularityError` if the second closest eigenvalue is not
    well separated from the first.
    """
    n = A.shape[0]
    if n <= 400:
        dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        vals, vecs = np.linalg.eigh(dense)
    else:
        scale = max(abs(_gershgorin_upper(A)), 1.0)
        shift = -1e-9 * scale
        try:
            vals, vecs = spla.eigsh(sp.csc_matrix(A), k=min(2, n - 1), sigma=shift, which="LM", tol=tol)
        except spla.ArpackNoConvergence as exc:
            raise SingularityError("inverse iteration for the null vector did not converge") from exc
    order = np.argsort(np.abs(vals))
    vals, vecs = vals[order], vecs[:, order]
    if vals.size > 1 and abs(vals[1]) <= 10.0 * max(abs(vals[0]), 1e-12):
        raise SingularityError(
            f"near-zero eigenvalue {vals[0]:.3e} is not isolated (next: {vals[1]:.3e})"
        )
    return float(vals[0]), vecs[:, 0]


# ---------------------------------------------------------------------------
# Newton solvers


def _newton_fixed_mu(grid, guess, mu, tol, maxit):
    lap = assemble_laplacian(grid)
    u = np.array(guess, dtype=float)
    hist = []
    for it in range(maxit + 1):
        F = residual(u, mu, lap)
        rn = float(np.max(np.abs(F), initial=0.0))
        hist.append(rn)
        if not math.isfinite(rn):
            break
        if rn <= tol:
            return u, it
        if it == maxit:
            break
        lu = _splu(jacobian(u, mu, lap))
        u = u - lu.solve(F)
    raise ConvergenceError(
        f"Newton did not converge at mu={mu:.6g} (residual {hist[-1]:.3e})", iterate=u, residual=hist[-1], history=hist
    )


def newton_correct(guess, mu: float, grid: Grid2D, tol: float = 1e-10, maxit: int = 20) -> np.ndarray:
    """Solve ``residual(u, mu) = 0`` at fixed ``mu`` by Newton's method."""
    guess = grid.check_field(guess, "guess")
    return _newton_fixed_mu(grid, guess, mu, tol, maxit)[0]


def _newton_arclength(grid, x_pred, tangent, x_base, s, tol, maxit):
    """Newton on ``F(u, mu) = 0`` with ``<t, x - x_base>_w = s``.

    Returns the corrected point and the number of iterations.
    """
    lap = assemble_laplacian(grid)
    x = np.array(x_pred, dtype=float)
    hist = []
    for it in range(maxit + 1):
        u, mu = x[:-1], x[-1]
        F = residual(u, mu, lap)
        g = _wdot(grid, tangent, x - x_base) - s
        rn = float(np.max(np.abs(F), initial=0.0))
        hist.append(rn)
        if not (math.isfinite(rn) and math.isfinite(g)):
            break
        if rn <= tol and abs(g) <= max(tol, 1e-12):
            return x, it
        if it == maxit:
            break
        lu = _splu(_bordered(grid, u, mu, tangent))
        x = x - lu.solve(np.append(F, g))
    raise ConvergenceError(
        f"pseudo-arclength corrector failed (residual {hist[-1]:.3e})", iterate=x, residual=hist[-1], history=hist
    )


# ---------------------------------------------------------------------------
# points and branches


def make_point(
    grid: Grid2D,
    u: np.ndarray,
    mu: float,
    reference: np.ndarray,
    settings: ContinuationSettings,
    kind: str = REGULAR,
) -> BranchPoint:
    """Annotate a solution with its tangent and leading eigenvalues."""
    t = _tangent(grid, u, mu, reference)
    eigs = top_eigenvalues(jacobian(u, mu, assemble_laplacian(grid)), settings.n_eigs, settings.eig_tol)
    return BranchPoint(state=u, mu=float(mu), tangent=t, min_stability_eig=float(eigs[0]), eigs=eigs, kind=kind)


def trivial_start(grid: Grid2D, mu0: float = 0.0, settings: ContinuationSettings | None = None) -> BranchPoint:
    """Start point on the homogeneous branch ``u = 0`` heading in ``settings.direction``."""
    settings = settings or ContinuationSettings()
    ref = np.zeros(grid.J + 1)
    ref[-1] = settings.direction
    return make_point(grid, np.zeros(grid.J), mu0, ref, settings)


def _sign(v: float) -> int:
    return int(v > 0) - int(v < 0)


def _detect(prev: BranchPoint, new: BranchPoint) -> tuple[str, int] | None:
    if _sign(prev.tangent[-1]) * _sign(new.tangent[-1]) < 0:
        return FOLD, -1
    n = min(prev.eigs.size, new.eigs.size)
    for k in range(n):
        if _sign(prev.eigs[k]) * _sign(new.eigs[k]) < 0:
            return BRANCH_POINT, k
    return None


def continue_branch(
    start: BranchPoint,
    settings: ContinuationSettings,
    grid: Grid2D,
    label: str = "",
) -> Branch:
    """Trace a branch from ``start`` by tangent prediction and bordered Newton correction.

    The step is halved after a failed correction and doubled after two
    consecutive easy corrections (at most three Newton iterations). Singular
    points are refined with :func:`locate_singularity` and inserted into the
    branch when ``settings.locate`` is set.
    """
    if start.residual_norm(grid) > max(settings.newton_tol, 1e-8):
        raise ValueError(f"start point residual {start.residual_norm(grid):.3e} exceeds tolerance")
    tangent = settings.direction * start.tangent
    first = replace(start, tangent=tangent)
    branch = Branch(points=[first], grid=grid, label=label, settings=settings)
    prev = first
    step = settings.step
    easy = 0
    while len(branch.points) < settings.max_points:
        if not settings.mu_min <= prev.mu <= settings.mu_max:
            break
        x0 = prev.x
        try:
            x1, its = _newton_arclength(
                grid, x0 + step * prev.tangent, prev.tangent, x0, step, settings.newton_tol, settings.newton_maxit
            )
            if _wnorm(grid, x1 - x0) > 2 * step:
                raise ConvergenceError("corrected point jumped too far")
            new = make_point(grid, x1[:-1], x1[-1], prev.tangent, settings)
        except ConvergenceError as exc:
            step /= 2
            easy = 0
            log.debug("step rejected at mu=%.6g (%s); step -> %.3g", prev.mu, exc, step)
            if step < settings.min_step:
                raise StallError(f"step size underflow near mu={prev.mu:.6g}", branch=branch) from exc
            continue
        event = _detect(prev, new)
        if event is not None and settings.locate:
            pair = Branch(points=[prev, new], grid=grid, label=label, settings=settings)
            try:
                refined = locate_singularity(pair, 0)
            except (ConvergenceError, ValueError) as exc:
                log.warning("could not refine %s near mu=%.6g: %s", event[0], new.mu, exc)
            else:
                branch.points.append(refined)
                log.info("%s: %s at mu=%.8f", label or "branch", refined.kind, refined.mu)
        branch.points.append(new)
        prev = new
        if its <= 3:
            easy += 1
            if easy >= 2:
                step = min(2 * step, settings.max_step)
                easy = 0
        else:
            easy = 0
    return branch


def _trial(grid, base: BranchPoint, s, settings):
    x, _ = _newton_arclength(
        grid, base.x + s * base.tangent, base.tangent, base.x, s, settings.newton_tol, settings.newton_maxit
    )
    return make_point(grid, x[:-1], x[-1], base.tangent, settings)


def locate_singularity(branch: Branch, bracket, tol: float | None = None, maxit: int = 80) -> BranchPoint:
    """Refine a fold or branch point between two consecutive branch points by bisection in arclength.

    ``bracket`` is the index ``i`` (or the pair ``(i, i+1)``) of the bracketing
    points. The returned point has ``kind`` set and a test function (tangent
    mu-component for folds, the crossing eigenvalue for branch points) of
    magnitude at most ``tol``.
    """
    i = bracket[0] if isinstance(bracket, (tuple, list)) else int(bracket)
    if isinstance(bracket, (tuple, list)) and bracket[1] != i + 1:
        raise ValueError("bracket must be a pair of consecutive indices")
    if not 0 <= i < len(branch.points) - 1:
        raise ValueError(f"bracket index {i} out of range")
    settings = branch.settings
    tol = settings.singularity_tol if tol is None else tol
    grid = branch.grid
    a, b = branch.points[i], branch.points[i + 1]
    event = _detect(a, b)
    if event is None:
        raise ValueError("bracket shows no sign change of a test function")
    kind, k = event

    def test(p: BranchPoint) -> float:
        return p.tangent[-1] if kind == FOLD else p.eigs[k]

    s_lo, s_hi = 0.0, _wdot(grid, a.tangent, b.x - a.x)
    f_lo = test(a)
    best, best_f = (a, f_lo) if abs(f_lo) < abs(test(b)) else (b, test(b))
    if abs(best_f) > tol:
        for _ in range(maxit):
            s = 0.5 * (s_lo + s_hi)
            p = _trial(grid, a, s, settings)
            f = test(p)
            if abs(f) < abs(best_f):
                best, best_f = p, f
            if abs(f) <= tol or s_hi - s_lo < 1e-15:
                break
            if _sign(f) == _sign(f_lo):
                s_lo, f_lo = s, f
            else:
                s_hi = s
    if abs(best_f) > tol:
        log.warning("%s test function only reduced to %.3e", kind, best_f)
    return replace(best, kind=kind)


def switch_branch(
    bp: BranchPoint,
    grid: Grid2D,
    kick: float | None = None,
    settings: ContinuationSettings | None = None,
) -> BranchPoint:
    """Step from a branch point onto the bifurcating branch.

    The null vector ``psi`` of the Jacobian (unit discrete L2 norm, largest
    entry positive) gives the predictor ``p* + kick * psi``. The corrector fixes
    the psi-component ``<psi, u - p*>_w = kick`` and lets ``mu`` float, which
    excludes the original branch. ``kick = 0`` returns the original state
    marked ``failed_switch``.
    """
    settings = settings or ContinuationSettings()
    kick = settings.kick if kick is None else kick
    if bp.kind != BRANCH_POINT:
        raise ValueError(f"switch_branch needs a branch point, got kind={bp.kind!r}")
    lap = assemble_laplacian(grid)
    _, psi = _null_vector(jacobian(bp.state, bp.mu, lap), settings.eig_tol)
    psi = psi / grid.l2_norm(psi)
    if psi[np.argmax(np.abs(psi))] < 0:
        psi = -psi
    direction = np.append(psi, 0.0)
    if kick == 0:
        warnings.warn("zero kick: branch switch stays on the original branch", RuntimeWarning, stacklevel=2)
        # the bordered system is singular here, so keep the branch point's own annotation
        return replace(bp, state=bp.state.copy(), kind=REGULAR, failed_switch=True)
    x, _ = _newton_arclength(
        grid, bp.x + kick * direction, direction, bp.x, kick, settings.newton_tol, settings.newton_maxit
    )
    return make_point(grid, x[:-1], x[-1], direction, settings)


def _arclength_point(grid, base: BranchPoint, s, settings) -> np.ndarray:
    x, _ = _newton_arclength(
        grid, base.x + s * base.tangent, base.tangent, base.x, s, settings.newton_tol, settings.newton_maxit
    )
    return x


def sample_branch(
    branch: Branch,
    mu_values: Sequence[float],
    stable_only: bool = True,
    label: str | None = None,
) -> Branch:
    """Points of ``branch`` at prescribed parameter values.

    Each target ``mu`` is bracketed by a pair of consecutive branch points
    (both stable when ``stable_only``); the arclength ``s`` along the first
    point's tangent with ``mu(s) = target`` is found by Brent's method and the
    result is polished by Newton at fixed ``mu``.
    """
    grid, settings = branch.grid, branch.settings
    out = []
    pts = branch.points
    for target in mu_values:
        seg = None
        for a, b in zip(pts[:-1], pts[1:]):
            if stable_only and not all(p.stable or p.kind != REGULAR for p in (a, b)):
                continue
            if min(a.mu, b.mu) <= target <= max(a.mu, b.mu):
                seg = (a, b)
                break
        if seg is None:
            raise ValueError(f"mu={target} is not bracketed by a {'stable ' if stable_only else ''}segment")
        a, b = seg
        if target == a.mu and a.kind == REGULAR:
            out.append(a)
            continue
        s_end = _wdot(grid, a.tangent, b.x - a.x)

        def g(s):
            return _arclength_point(grid, a, s, settings)[-1] - target

        if abs(target - b.mu) == 0:
            s_star = s_end
        else:
            s_star = brentq(g, 0.0, s_end, xtol=1e-14, rtol=1e-13)
        x = _arclength_point(grid, a, s_star, settings)
        u, _ = _newton_fixed_mu(grid, x[:-1], target, settings.newton_tol, settings.newton_maxit)
        out.append(make_point(grid, u, target, a.tangent, settings))
    return Branch(points=out, grid=grid, label=label if label is not None else f"{branch.label}-sampled", settings=settings)


def bifurcation_summary(branches: Sequence[Branch], mu_end: float = 4.0) -> dict:
    """Branch/fold parameter values and the five parameter regimes.

    The regimes use the first branch point of the trivial branch and the folds
    of the first three bifurcating branches::

        R0 = [0, f1), R1 = [f1, b1), R2 = [b1, f2), R3 = [f2, f3), R4 = [f3, mu_end]
    """
    out: dict = {"branches": {}}
    for br in branches:
        out["branches"][br.label] = {
            "branch_points": [p.mu for p in br.singular_points(BRANCH_POINT)],
            "folds": [p.mu for p in br.singular_points(FOLD)],
            "n_points": len(br),
        }
    bps = sorted(p.mu for br in branches[:1] for p in br.singular_points(BRANCH_POINT))
    folds = []
    for br in branches[1:]:
        f = [p.mu for p in br.singular_points(FOLD)]
        folds.append(f[0] if f else None)
    out["mu_b"] = bps
    out["mu_f"] = folds
    if bps and len(folds) >= 3 and all(f is not None for f in folds[:3]):
        f1, f2, f3 = folds[:3]
        b1 = bps[0]
        out["regimes"] = {
            "R0": [0.0, f1],
            "R1": [f1, b1],
            "R2": [b1, f2],
            "R3": [f2, f3],
            "R4": [f3, mu_end],
        }
    return out


def parameter_regime(mu: float, regimes: dict) -> str | None:
    names = list(regimes)
    for name in names:
        lo, hi = regimes[name]
        if lo <= mu < hi or (name == names[-1] and lo <= mu <= hi):
            return name
    return None
