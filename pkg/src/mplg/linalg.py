"""Sparse symmetric storage and a preconditioned conjugate gradient solver.

Matrices are ``scipy.sparse.csr_matrix`` with sorted column indices and full
(not half) symmetric storage.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp


class Preconditioner(str, Enum):
    NONE = "none"
    JACOBI = "jacobi"


class ConvergenceError(RuntimeError):
    """CG hit its iteration limit; ``residual`` is the final relative residual."""

    def __init__(self, message: str, residual: float, iters: int):
        super().__init__(message)
        self.residual = residual
        self.iters = iters


@dataclass
class CGResult:
    x: np.ndarray
    iters: int
    residual: float


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A)
    A.sort_indices()
    return A


def spmv(A: sp.csr_matrix, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {A.shape} times vector of length {x.shape[0]}")
    return A @ x


def cg_solve(
    A: sp.csr_matrix,
    b: np.ndarray,
    tol: float = 1e-12,
    max_iter: int | None = None,
    precond: Preconditioner | str = Preconditioner.JACOBI,
    x0: np.ndarray | None = None,
) -> CGResult:
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    Stops once ``||b - A x|| <= tol * ||b||``, measured on the explicitly
    recomputed residual.  When that target lies below what floating point can
    resolve, the roundoff level ``64 eps || |A||x| + |b| ||`` is accepted
    instead; the returned ``residual`` is always the true relative residual.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"dimension mismatch: matrix {A.shape}, rhs of length {n}")
    precond = Preconditioner(precond)
    max_iter = 10 * n if max_iter is None else max_iter
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return CGResult(np.zeros(n), 0, 0.0)

    if precond is Preconditioner.JACOBI:
        diag = A.diagonal()
        if np.any(diag <= 0):
            raise ValueError("Jacobi preconditioner needs a positive diagonal")
        inv_diag = 1.0 / diag
    else:
        inv_diag = None
    absA = None

    def target(x) -> float:
        nonlocal absA
        if absA is None:
            absA = abs(A)
        floor = 64.0 * np.finfo(float).eps * float(np.linalg.norm(absA @ np.abs(x) + np.abs(b)))
        return max(tol * bnorm, floor)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    it = 0
    r = b - spmv(A, x)
    rnorm = float(np.linalg.norm(r))
    while rnorm > tol * bnorm and it < max_iter:
        # (re)start from the true residual
        z = r * inv_diag if inv_diag is not None else r.copy()
        p = z.copy()
        rz = float(r @ z)
        while it < max_iter:
            Ap = spmv(A, p)
            pAp = float(p @ Ap)
            if pAp <= 0.0:
                raise ValueError("matrix is not positive definite (p^T A p <= 0)")
            alpha = rz / pAp
            x += alpha * p
            r -= alpha * Ap
            it += 1
            if float(np.linalg.norm(r)) <= tol * bnorm:
                break
            z = r * inv_diag if inv_diag is not None else r
            rz_new = float(r @ z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        r = b - spmv(A, x)
        rnorm = float(np.linalg.norm(r))
        if rnorm <= target(x):
            break
    rel = rnorm / bnorm
    if rnorm > target(x):
        raise ConvergenceError(
            f"CG did not converge in {max_iter} iterations (relative residual {rel:.3e})", rel, it
        )
    return CGResult(x, it, rel)
