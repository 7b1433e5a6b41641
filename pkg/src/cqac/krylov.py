"""Matrix-free Krylov solvers on array-valued unknowns.

The unknown may be an array of any shape; inner products are Frobenius
products, so a ``J x J`` matrix unknown never has to be flattened. Every
solver stops on the relative residual ``||b - A x|| / ||b||`` and confirms
convergence with an explicitly recomputed residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ConvergenceError

__all__ = ["KrylovInfo", "bicgstab", "gmres", "qmr", "SOLVERS"]

Operator = Callable[[np.ndarray], np.ndarray]


@dataclass
class KrylovInfo:
    iterations: int = 0
    matvecs: int = 0
    residual: float = math.nan
    converged: bool = False
    history: list[float] = field(default_factory=list)


def _dot(a, b) -> float:
    return float(np.vdot(a, b))


def _norm(a) -> float:
    return float(np.linalg.norm(a.ravel()))


def _fail(name, x, info, maxit):
    raise ConvergenceError(
        f"{name} did not reach tolerance in {maxit} iterations (relative residual {info.residual:.3e})",
        iterate=x,
        residual=info.residual,
        history=info.history,
    )


def bicgstab(A: Operator, b: np.ndarray, x0=None, tol: float = 1e-4, maxit: int = 200):
    """Stabilized bi-conjugate gradients (van der Vorst).

    Returns ``(x, info)``; ``info.iterations`` counts full iterations, with an
    early exit after the first half-step counted as a full iteration. Raises
    :class:`ConvergenceError` holding the best iterate when ``maxit`` is hit.
    """
    info = KrylovInfo()
    bnorm = _norm(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float, copy=True)
    if bnorm == 0.0:
        x[...] = 0.0
        info.residual, info.converged = 0.0, True
        return x, info

    def true_residual(x):
        info.matvecs += 1
        return b - A(x)

    r = true_residual(x) if x0 is not None else b.copy()
    res = _norm(r) / bnorm
    info.history.append(res)
    best_x, best_res = x.copy(), res
    if res <= tol:
        info.residual, info.converged = res, True
        return x, info

    rhat = r.copy()
    p = np.zeros_like(b)
    v = np.zeros_like(b)
    rho = alpha = omega = 1.0
    for it in range(1, maxit + 1):
        info.iterations = it
        rho_new = _dot(rhat, r)
        if rho_new == 0.0 or omega == 0.0:
            # breakdown: restart from the current residual
            r = true_residual(x)
            rhat = r.copy()
            rho_new = _dot(rhat, r)
            p[...] = 0.0
            v[...] = 0.0
            rho = alpha = omega = 1.0
            if rho_new == 0.0:
                break
        beta = (rho_new / rho) * (alpha / omega)
        p -= omega * v
        p *= beta
        p += r
        v = A(p)
        info.matvecs += 1
        alpha = rho_new / _dot(rhat, v)
        s = r - alpha * v
        if _norm(s) / bnorm <= tol:
            x += alpha * p
            r = true_residual(x)
            res = _norm(r) / bnorm
            info.history.append(res)
            if res <= tol:
                info.residual, info.converged = res, True
                return x, info
            rhat = r.copy()
            rho = alpha = omega = 1.0
            p[...] = 0.0
            v[...] = 0.0
            continue
        t = A(s)
        info.matvecs += 1
        tt = _dot(t, t)
        omega = _dot(t, s) / tt if tt > 0 else 0.0
        x += alpha * p
        x += omega * s
        r = s - omega * t
        rho = rho_new
        res = _norm(r) / bnorm
        if res <= tol:
            r = true_residual(x)
            res = _norm(r) / bnorm
            info.history.append(res)
            if res <= tol:
                info.residual, info.converged = res, True
                return x, info
            rhat = r.copy()
            rho = alpha = omega = 1.0
            p[...] = 0.0
            v[...] = 0.0
        else:
            info.history.append(res)
        if res < best_res:
            best_x, best_res = x.copy(), res
    info.residual = best_res
    _fail("bicgstab", best_x, info, maxit)


def gmres(A: Operator, b: np.ndarray, x0=None, tol: float = 1e-4, maxit: int = 200, restart: int = 10):
    """Restarted GMRES with modified Gram-Schmidt Arnoldi and Givens rotations.

    ``restart = 0`` disables restarting (one cycle of at most ``maxit`` inner
    steps). Otherwise ``maxit`` bounds the number of outer cycles, so at most
    ``restart * maxit`` inner steps are taken. ``info.iterations`` counts inner
    steps.
    """
    info = KrylovInfo()
    bnorm = _norm(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float, copy=True)
    if bnorm == 0.0:
        x[...] = 0.0
        info.residual, info.converged = 0.0, True
        return x, info
    m = maxit if restart in (0, None) else int(restart)
    cycles = 1 if restart in (0, None) else maxit
    best_x, best_res = x.copy(), math.inf
    for _ in range(cycles):
        r = b - A(x) if (x0 is not None or info.iterations) else b.copy()
        info.matvecs += 1
        beta = _norm(r)
        res = beta / bnorm
        info.history.append(res)
        if res < best_res:
            best_x, best_res = x.copy(), res
        if res <= tol:
            info.residual, info.converged = res, True
            return x, info
        V = [r / beta]
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        k = 0
        for j in range(m):
            w = A(V[j])
            info.matvecs += 1
            info.iterations += 1
            for i in range(j + 1):
                H[i, j] = _dot(V[i], w)
                w -= H[i, j] * V[i]
            H[j + 1, j] = _norm(w)
            for i in range(j):
                tmp = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = tmp
            denom = math.hypot(H[j, j], H[j + 1, j])
            cs[j], sn[j] = (1.0, 0.0) if denom == 0 else (H[j, j] / denom, H[j + 1, j] / denom)
            H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            k = j + 1
            est = abs(g[j + 1]) / bnorm
            info.history.append(est)
            if est <= tol or H[j, j] == 0.0:
                break
            hn = _norm(w)
            if hn == 0.0:
                break
            V.append(w / hn)
        y = np.linalg.solve(np.triu(H[:k, :k]), g[:k]) if k else np.zeros(0)
        for i in range(k):
            x += y[i] * V[i]
        del V
        rt = b - A(x)
        info.matvecs += 1
        res = _norm(rt) / bnorm
        if res < best_res:
            best_x, best_res = x.copy(), res
        if res <= tol:
            info.history.append(res)
            info.residual, info.converged = res, True
            return x, info
    info.residual = best_res
    _fail("gmres", best_x, info, maxit)


def qmr(A: Operator, b: np.ndarray, x0=None, tol: float = 1e-4, maxit: int = 200, AT: Operator | None = None):
    """Quasi-minimal residual via :func:`scipy.sparse.linalg.qmr` on flattened unknowns.

    ``AT`` is the adjoint operator; it defaults to ``A`` (self-adjoint case).
    """
    info = KrylovInfo()
    shape = b.shape
    n = b.size
    AT = A if AT is None else AT
    bnorm = _norm(b)
    if bnorm == 0.0:
        info.residual, info.converged = 0.0, True
        return np.zeros_like(b), info

    def mv(v):
        info.matvecs += 1
        return A(np.reshape(v, shape)).ravel()

    def rmv(v):
        info.matvecs += 1
        return AT(np.reshape(v, shape)).ravel()

    op = spla.LinearOperator((n, n), matvec=mv, rmatvec=rmv, dtype=float)

    def cb(xk):
        info.iterations += 1

    x0f = None if x0 is None else np.asarray(x0, dtype=float).ravel()
    xf, flag = spla.qmr(op, b.ravel(), x0=x0f, rtol=tol, atol=0.0, maxiter=maxit, callback=cb)
    x = xf.reshape(shape)
    res = _norm(b - A(x)) / bnorm
    info.residual = res
    info.history.append(res)
    if res <= tol:
        info.converged = True
        return x, info
    _fail("qmr", x, info, maxit)


SOLVERS = {"bicgstab": bicgstab, "gmres": gmres, "qmr": qmr}
