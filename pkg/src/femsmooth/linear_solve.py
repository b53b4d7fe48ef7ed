"""Linear solvers with an explicit residual contract."""
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = ["SolveReport", "SolverError", "solve_spd", "solve_general", "weighted_norm"]


class SolverError(RuntimeError):
    """Raised when a solve misses its tolerance; carries the achieved residual."""

    def __init__(self, message, residual=np.nan):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class SolveReport:
    iterations: object  # int, or "direct"
    residual: float     # final relative residual ||b - A x|| / ||b||
    seconds: float
    method: str


def _relres(A, x, b):
    nb = np.linalg.norm(b)
    r = np.linalg.norm(b - A @ x)
    return r / nb if nb > 0 else r


def _direct(A, b, tol, t0, label):
    try:
        lu = spla.splu(sp.csc_matrix(A))
        x = lu.solve(b)
    except RuntimeError as exc:
        raise SolverError(f"{label}: sparse factorisation failed ({exc})") from exc
    res = _relres(A, x, b)
    # a few steps of iterative refinement
    for _ in range(3):
        if not np.isfinite(res) or res <= 0.01 * tol:
            break
        x = x + lu.solve(b - A @ x)
        res = _relres(A, x, b)
    if not np.isfinite(res) or res > tol:
        raise SolverError(f"{label}: relative residual {res:.3e} exceeds {tol:.1e}", res)
    return x, SolveReport("direct", res, time.perf_counter() - t0, "direct")


def solve_spd(A, b, tol=1e-12, method="cg", maxiter=None):
    """Solve a symmetric positive definite system.

    ``method="cg"`` runs conjugate gradients with a Jacobi preconditioner and
    an iteration cap of ``10 n``; ``method="direct"`` uses a sparse LU.
    """
    t0 = time.perf_counter()
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if n == 0:
        return np.zeros(0), SolveReport(0, 0.0, 0.0, method)
    if not np.any(b):
        return np.zeros(n), SolveReport(0, 0.0, time.perf_counter() - t0, method)
    if method == "direct":
        return _direct(A, b, tol, t0, "solve_spd")
    if method != "cg":
        raise ValueError(f"unknown method {method!r}")
    d = A.diagonal()
    if np.any(d <= 0):
        raise SolverError("solve_spd: non-positive diagonal, matrix is not SPD")
    M = spla.LinearOperator((n, n), matvec=lambda r: r / d, dtype=float)
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.cg(A, b, rtol=tol, atol=0.0, maxiter=maxiter or 10 * n, M=M, callback=cb)
    res = _relres(A, x, b)
    if info != 0 or res > tol:
        raise SolverError(f"solve_spd: CG stopped after {count[0]} iterations with relative "
                          f"residual {res:.3e} (tol {tol:.1e})", res)
    return x, SolveReport(count[0], res, time.perf_counter() - t0, "cg")


def solve_general(A, b, tol=1e-12):
    """Solve a (possibly nonsymmetric) nonsingular sparse system by sparse LU."""
    t0 = time.perf_counter()
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] == 0:
        return np.zeros(0), SolveReport("direct", 0.0, 0.0, "direct")
    if not np.any(b):
        return np.zeros(A.shape[0]), SolveReport("direct", 0.0, time.perf_counter() - t0, "direct")
    return _direct(A, b, tol, t0, "solve_general")


def weighted_norm(v, M):
    """``sqrt(v^T M v)`` for symmetric positive semidefinite ``M``."""
    v = np.asarray(v, dtype=float)
    q = float(v @ (M @ v))
    if q < 0:
        scale = float(abs(sp.csr_matrix(M)).max()) if sp.issparse(M) else float(np.abs(M).max())
        if q < -1e-10 * float(v @ v) * scale:
            raise ValueError(f"weighted_norm: v^T M v = {q:.3e} < 0, M is not PSD")
        return 0.0
    return float(np.sqrt(q))
