"""Sparse storage, preconditioned conjugate gradients and small dense solves."""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._kernels import default_threads, get_kernels

__all__ = [
    "SparseMatrix",
    "SolveReport",
    "CGBreakdown",
    "SolverError",
    "cg_solve",
    "dense_solve",
    "LinearSolver",
    "DENSE_LIMIT",
]

DENSE_LIMIT = 2000


class SolverError(RuntimeError):
    """A linear solve failed to converge."""

    def __init__(self, message, step=None, report=None):
        self.step = step
        self.report = report
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)


class CGBreakdown(SolverError):
    """``p^T A p <= 0`` was met: the matrix is not positive definite."""


class SparseMatrix:
    """Compressed-row matrix with ``int32`` offsets/indices and ``float64`` values.

    Column indices are strictly increasing within each row.
    """

    def __init__(self, indptr, indices, data, shape):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int32)
        self.indices = np.ascontiguousarray(indices, dtype=np.int32)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.shape = (int(shape[0]), int(shape[1]))
        self.validate()

    @classmethod
    def from_scipy(cls, m):
        m = sp.csr_matrix(m, dtype=np.float64, copy=True)
        m.sum_duplicates()
        m.sort_indices()
        return cls(m.indptr, m.indices, m.data, m.shape)

    def validate(self):
        n, ncol = self.shape
        if self.indptr.shape != (n + 1,) or self.indptr[0] != 0 or self.indptr[-1] != len(self.indices):
            raise ValueError("inconsistent row offsets")
        if len(self.data) != len(self.indices):
            raise ValueError("indices and values differ in length")
        if np.any(np.diff(self.indptr) < 0):
            raise ValueError("row offsets must be non-decreasing")
        if len(self.indices):
            if self.indices.min() < 0 or self.indices.max() >= ncol:
                raise ValueError("column index out of range")
            step = np.diff(self.indices)
            row_start = np.zeros(len(self.indices), dtype=bool)
            row_start[self.indptr[:-1][np.diff(self.indptr) > 0]] = True
            if np.any(step[~row_start[1:]] <= 0):
                raise ValueError("column indices must be strictly increasing within each row")

    @property
    def nnz(self):
        return len(self.data)

    def to_scipy(self):
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def diagonal(self):
        return self.to_scipy().diagonal()

    def matvec(self, x, out=None, backend=None, nthreads=None):
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.shape != (self.shape[1],):
            raise ValueError(f"vector of length {x.shape} does not match {self.shape[1]} columns")
        if out is None:
            out = np.empty(self.shape[0])
        nt = default_threads() if nthreads is None else nthreads
        get_kernels(backend).csr_matvec(self.indptr, self.indices, self.data, x, out, nt)
        return out

    __matmul__ = matvec


@dataclass
class SolveReport:
    """Outcome of a linear solve; ``residual`` is ``||b - A x|| / ||b||`` of the returned ``x``."""

    iterations: int
    residual: float
    converged: bool
    wall_time: float
    recursion_residual: float = float("nan")
    method: str = "cg"


def _as_sparse(A):
    return A if isinstance(A, SparseMatrix) else SparseMatrix.from_scipy(A)


def _true_residual(A, x, b, bnorm, backend, nthreads):
    r = b - A.matvec(x, backend=backend, nthreads=nthreads)
    return float(np.sqrt(r @ r)) / bnorm


def cg_solve(A, b, tol=1e-10, max_iter=None, preconditioner="jacobi", x0=None, backend=None,
             nthreads=None, max_restarts=3):
    """Solve ``A x = b`` for SPD ``A`` by preconditioned CG.

    The kernel's recursion residual decides termination; afterwards the true
    residual is recomputed and, if it misses ``tol``, CG restarts from the
    current iterate (at most ``max_restarts`` times).

    Raises
    ------
    CGBreakdown
        If a search direction has ``p^T A p <= 0``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    A = _as_sparse(A)
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    b = np.ascontiguousarray(b, dtype=np.float64)
    if b.shape != (n,):
        raise ValueError(f"right-hand side of shape {b.shape} does not match {n}")
    max_iter = 10 * n + 10 if max_iter is None else int(max_iter)
    nt = default_threads() if nthreads is None else nthreads
    t0 = time.perf_counter()
    bnorm = float(np.sqrt(b @ b))
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True, time.perf_counter() - t0, 0.0)
    if preconditioner == "jacobi":
        d = A.diagonal()
        if np.any(d <= 0):
            raise CGBreakdown("non-positive diagonal entry; matrix is not SPD")
        dinv = 1.0 / d
    elif preconditioner in (None, "none"):
        dinv = np.ones(n)
    else:
        raise ValueError(f"unknown preconditioner {preconditioner!r}")
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    kern = get_kernels(backend)
    total = 0
    rec = np.inf
    res = np.inf
    for _ in range(max_restarts + 1):
        it, rec, broke = kern.pcg(A.indptr, A.indices, A.data, b, x, dinv, float(tol), max_iter - total, nt)
        total += it
        if broke >= 0:
            raise CGBreakdown(f"CG breakdown at iteration {total}: p^T A p <= 0 (matrix not SPD)")
        res = _true_residual(A, x, b, bnorm, backend, nt)
        if res <= tol or total >= max_iter:
            break
    report = SolveReport(total, res, bool(res <= tol), time.perf_counter() - t0, float(rec))
    return x, report


def dense_solve(A, b):
    """Direct LU solve for ``n <= DENSE_LIMIT``; raises ``LinAlgError`` when singular."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    if n > DENSE_LIMIT:
        raise ValueError(f"dense solve limited to n <= {DENSE_LIMIT} (got {n})")
    if n == 0:
        return np.zeros(0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=True)
    dmin = np.min(np.abs(np.diag(lu)))
    if dmin == 0.0 or dmin <= n * np.finfo(float).eps * np.max(np.abs(np.diag(lu))):
        raise np.linalg.LinAlgError("matrix is singular to working precision")
    return sla.lu_solve((lu, piv), np.asarray(b, dtype=float))


class LinearSolver:
    """A factorization or CG setup for one fixed matrix, reused across time steps.

    ``method`` is ``"cg"`` (Jacobi PCG, the default), ``"direct"`` (sparse LU)
    or ``"dense"`` (dense LU, small problems only).
    """

    def __init__(self, matrix, method="cg", tol=1e-10, max_iter=None, preconditioner="jacobi",
                 backend=None, nthreads=None):
        if method not in ("cg", "direct", "dense"):
            raise ValueError(f"unknown solver method {method!r}")
        self.matrix = matrix
        self.method = method
        self.tol = tol
        self.max_iter = max_iter
        self.preconditioner = preconditioner
        self.backend = backend
        self.nthreads = nthreads
        self._A = _as_sparse(matrix)
        self._factor = None
        if method == "direct":
            self._factor = spla.splu(sp.csc_matrix(self._A.to_scipy()))
        elif method == "dense":
            dense = self._A.to_scipy().toarray()
            if dense.shape[0] > DENSE_LIMIT:
                raise ValueError(f"dense solver limited to n <= {DENSE_LIMIT}")
            self._factor = sla.lu_factor(dense)
        self.total_iterations = 0

    @property
    def n(self):
        return self._A.shape[0]

    def solve(self, b, x0=None):
        if self.method == "cg":
            x, rep = cg_solve(self._A, b, tol=self.tol, max_iter=self.max_iter,
                              preconditioner=self.preconditioner, x0=x0, backend=self.backend,
                              nthreads=self.nthreads)
            self.total_iterations += rep.iterations
            return x, rep
        t0 = time.perf_counter()
        b = np.asarray(b, dtype=float)
        if self.method == "direct":
            x = self._factor.solve(b)
            x = x + self._factor.solve(b - self._A.matvec(x))
        else:
            x = sla.lu_solve(self._factor, b)
            x = x + sla.lu_solve(self._factor, b - self._A.matvec(x))
        bnorm = float(np.linalg.norm(b))
        res = 0.0 if bnorm == 0.0 else float(np.linalg.norm(b - self._A.matvec(x))) / bnorm
        return x, SolveReport(0, res, True, time.perf_counter() - t0, res, self.method)
