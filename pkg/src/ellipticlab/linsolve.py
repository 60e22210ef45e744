"""Linear solvers for the assembled complex systems.

BiCGStab (right-preconditioned, optional Jacobi) is the default; a dense LU
solve serves as an oracle for small systems.  Reported residuals are always
recomputed from ``A``, ``x`` and ``b``.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .assembly import ComplexSparseMatrix

__all__ = ["SolveReport", "SolverConfig", "SolverError", "BreakdownError", "SingularMatrixError",
           "solve_bicgstab", "solve_dense", "solve"]

log = logging.getLogger(__name__)

DENSE_CAP = 2000
MAX_STALLS = 5


class SolverError(RuntimeError):
    pass


class BreakdownError(SolverError):
    pass


class SingularMatrixError(SolverError):
    pass


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    wall_time: float
    method: str = "bicgstab"


@dataclass(frozen=True)
class SolverConfig:
    method: str = "bicgstab"
    tol: float = 1e-10
    max_iter: int = 20000
    preconditioner: str = "jacobi"
    raise_on_failure: bool = True

    def __post_init__(self):
        if self.method not in ("bicgstab", "dense"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if self.preconditioner not in ("none", "jacobi"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


def _relative_residual(A, x, b, bnorm):
    r = np.linalg.norm(b - A.matvec(x))
    return float(r / bnorm) if bnorm > 0 else float(r)


def solve_bicgstab(A: ComplexSparseMatrix, b, tol: float = 1e-10, max_iter: int = 20000,
                   preconditioner: str = "jacobi", x0=None):
    """Solve ``A x = b``; returns ``(x, SolveReport)``.

    On a breakdown of the recurrence the iteration restarts once from the
    current iterate with a fresh shadow residual; a second breakdown raises
    :class:`BreakdownError`.  A converged recurrence is confirmed against the
    true residual and the iteration resumes if the check fails; after
    ``MAX_STALLS`` resumptions without halving the true residual the solve
    stops at the attainable accuracy and reports non-convergence.
    """
    t0 = time.perf_counter()
    b = np.ascontiguousarray(b, dtype=np.complex128)
    n = A.n
    if b.shape != (n,):
        raise ValueError(f"right-hand side of length {b.size} does not match dimension {n}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if preconditioner == "jacobi":
        d = A.diagonal()
        if np.any(d == 0):
            raise ValueError(f"Jacobi preconditioner needs a nonzero diagonal (row {int(np.flatnonzero(d == 0)[0])})")
        dinv = 1.0 / d
    elif preconditioner == "none":
        dinv = None
    else:
        raise ValueError(f"unknown preconditioner {preconditioner!r}")

    x = np.zeros(n, dtype=np.complex128) if x0 is None else np.array(x0, dtype=np.complex128)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        x[:] = 0.0
        return x, SolveReport(0, 0.0, True, time.perf_counter() - t0)
    threshold = tol * bnorm

    def prec(v):
        return v if dinv is None else dinv * v

    it = 0
    restarts = 0
    stalls = 0
    best_true = np.inf
    r = b - A.matvec(x)
    while it < max_iter:
        # (re)start the recurrence from the current iterate
        rhat = r.copy()
        rho_old = alpha = omega = 1.0 + 0j
        v = np.zeros(n, dtype=np.complex128)
        p = np.zeros(n, dtype=np.complex128)
        broke = False
        while it < max_iter:
            if np.linalg.norm(r) <= threshold:
                break
            rho = np.vdot(rhat, r)
            if rho == 0 or not np.isfinite(rho):
                broke = True
                break
            beta = (rho / rho_old) * (alpha / omega)
            p = r + beta * (p - omega * v)
            phat = prec(p)
            v = A.matvec(phat)
            denom = np.vdot(rhat, v)
            if denom == 0 or not np.isfinite(denom):
                broke = True
                break
            alpha = rho / denom
            s = r - alpha * v
            it += 1
            if np.linalg.norm(s) <= threshold:
                x += alpha * phat
                r = s
                break
            shat = prec(s)
            t = A.matvec(shat)
            tt = np.vdot(t, t).real
            if tt == 0:
                broke = True
                x += alpha * phat
                r = s
                break
            omega = np.vdot(t, s) / tt
            x += alpha * phat + omega * shat
            r = s - omega * t
            rho_old = rho
            if omega == 0:
                broke = True
                break
        if broke:
            restarts += 1
            if restarts > 1:
                res = _relative_residual(A, x, b, bnorm)
                raise BreakdownError(
                    f"BiCGStab broke down twice (iteration {it}, relative residual {res:.3e})")
            log.debug("BiCGStab breakdown at iteration %d; restarting", it)
            r = b - A.matvec(x)
            continue
        # confirm against the true residual
        r = b - A.matvec(x)
        rn = float(np.linalg.norm(r))
        if rn <= threshold:
            break
        stalls = stalls + 1 if rn > 0.5 * best_true else 0
        best_true = min(best_true, rn)
        if stalls >= MAX_STALLS:
            log.debug("true residual stagnated at %.3e after %d iterations", rn / bnorm, it)
            break
        log.debug("recurrence residual drifted at iteration %d; resuming", it)
    res = _relative_residual(A, x, b, bnorm)
    return x, SolveReport(it, res, res <= tol, time.perf_counter() - t0)


def solve_dense(A: ComplexSparseMatrix, b, cap: int = DENSE_CAP):
    """Dense LU with partial pivoting; returns ``(x, SolveReport)``."""
    t0 = time.perf_counter()
    if A.n > cap:
        raise ValueError(f"dense solve limited to dimension {cap}, got {A.n}")
    b = np.asarray(b, dtype=np.complex128)
    dense = A.to_dense()
    scale = np.abs(dense).max() if dense.size else 0.0
    lu, piv = scipy.linalg.lu_factor(dense, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if scale == 0 or pivots.min() < 1e-14 * scale:
        raise SingularMatrixError(
            f"matrix is numerically singular (smallest pivot {pivots.min():.3e}, max entry {scale:.3e})")
    x = scipy.linalg.lu_solve((lu, piv), b)
    bnorm = float(np.linalg.norm(b))
    res = _relative_residual(A, x, b, bnorm)
    return x, SolveReport(0, res, True, time.perf_counter() - t0, method="dense")


def solve(A: ComplexSparseMatrix, b, config: SolverConfig = SolverConfig(), x0=None):
    """Dispatch on ``config.method``; raises :class:`SolverError` on non-convergence
    when ``config.raise_on_failure`` is set."""
    if config.method == "dense":
        return solve_dense(A, b)
    x, rep = solve_bicgstab(A, b, tol=config.tol, max_iter=config.max_iter,
                            preconditioner=config.preconditioner, x0=x0)
    if not rep.converged and config.raise_on_failure:
        raise SolverError(f"BiCGStab did not converge in {rep.iterations} iterations "
                          f"(relative residual {rep.residual:.3e}, tol {config.tol:.1e})")
    log.debug("bicgstab: %d iterations, residual %.2e, %.2fs", rep.iterations, rep.residual, rep.wall_time)
    return x, rep
