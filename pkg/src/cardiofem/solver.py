"""Sparse matrix-vector products and Jacobi-preconditioned conjugate gradients."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverSettings:
    abs_tol: float = 1e-5
    rel_tol: float = 1e-5
    max_iters: int = 100

    def __post_init__(self):
        if self.abs_tol < 0 or self.rel_tol < 0:
            raise ValueError("tolerances must be non-negative")
        if self.abs_tol == 0 and self.rel_tol == 0:
            raise ValueError("abs_tol and rel_tol cannot both be zero")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class PCGTrace:
    """Instrumentation filled in by :func:`pcg` when passed."""

    znorms: list = field(default_factory=list)  # ||z_0||, ||z_1||, ...
    residual: np.ndarray | None = None  # recurrence residual r at exit


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual_norm: float  # Euclidean norm of the last preconditioned residual
    converged: bool


def spmv(A, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: A is {A.shape}, x has length {x.shape[0]}")
    return A @ x


class JacobiPreconditioner:
    """Diagonal preconditioner: ``apply(r)`` solves ``diag(A) z = r``."""

    def __init__(self, A):
        diag = sp.csr_matrix(A).diagonal().astype(np.float64)
        if np.any(diag == 0.0):
            raise SolverError(f"zero diagonal entry at row {int(np.flatnonzero(diag == 0.0)[0])}")
        self.inv_diag = 1.0 / diag

    def apply(self, r: np.ndarray) -> np.ndarray:
        return self.inv_diag * r


class IdentityPreconditioner:
    def apply(self, r: np.ndarray) -> np.ndarray:
        return r.copy()


def jacobi_preconditioner(A) -> JacobiPreconditioner:
    return JacobiPreconditioner(A)


def _dot(a: np.ndarray, b: np.ndarray, what: str) -> float:
    val = float(a @ b)
    if not math.isfinite(val):
        raise SolverError(f"non-finite inner product ({what})")
    return val


def pcg(A, b, x0, precond=None, settings: SolverSettings | None = None, trace: PCGTrace | None = None):
    """Preconditioned conjugate gradients.

    Stopping rule: after each residual update the new preconditioned residual
    ``z_{k+1}`` is formed and the loop breaks when ``||z_{k+1}|| < abs_tol`` or
    ``||z_{k+1}|| / ||z_k|| < rel_tol`` (consecutive iterates, not the initial
    one). The test is on ``z``, not on ``r``. A zero-iteration return happens
    when the initial guess already satisfies the absolute test.

    Non-convergence within ``max_iters`` is reported in the returned
    :class:`SolveReport`; NaN/Inf in an inner product raises :class:`SolverError`.
    Pass a :class:`PCGTrace` to record the ``||z_k||`` sequence and final residual.
    """
    settings = settings or SolverSettings()
    precond = precond or IdentityPreconditioner()
    b = np.asarray(b, dtype=np.float64)
    x = np.array(x0, dtype=np.float64, copy=True)
    if x.shape != b.shape or A.shape[0] != b.shape[0]:
        raise ValueError("dimension mismatch between A, b and x0")

    r = b - A @ x
    z = precond.apply(r)
    p = z.copy()
    rho = _dot(r, z, "r.z")
    znorm = math.sqrt(_dot(z, z, "z.z"))
    if trace is not None:
        trace.znorms.append(znorm)
        trace.residual = r
    if znorm < settings.abs_tol or znorm == 0.0:
        return x, SolveReport(0, znorm, True)

    for k in range(settings.max_iters):
        q = A @ p
        pq = _dot(p, q, "p.Ap")
        if pq <= 0.0:
            raise SolverError(f"matrix not positive definite (p.Ap = {pq:g}) at iteration {k}")
        alpha = rho / pq
        x += alpha * p
        r -= alpha * q
        z = precond.apply(r)
        znorm_new = math.sqrt(_dot(z, z, "z.z"))
        if trace is not None:
            trace.znorms.append(znorm_new)
        if znorm_new < settings.abs_tol or znorm_new < settings.rel_tol * znorm:
            return x, SolveReport(k + 1, znorm_new, True)
        rho_new = _dot(r, z, "r.z")
        beta = rho_new / rho
        p = z + beta * p
        rho, znorm = rho_new, znorm_new
    return x, SolveReport(settings.max_iters, znorm, False)
