"""CSR matrices and the small set of solvers the PDE operators need.

Conjugate gradients for SPD pressure-type operators, Jacobi-preconditioned
BiCGStab for the nonsymmetric coupled operators, and a dense LU path used as
oracle and small-problem fallback.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

from .errors import InvalidArgumentError, NonConvergenceError, SingularMatrixError

DENSE_CAP = 4096


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    nrows: int
    ncols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ro = np.asarray(self.row_offsets, dtype=np.int64)
        ci = np.asarray(self.col_indices, dtype=np.int64)
        va = np.asarray(self.values, dtype=float)
        if ro.shape != (self.nrows + 1,) or ro[0] != 0 or ro[-1] != ci.size or ci.size != va.size:
            raise InvalidArgumentError("inconsistent CSR offsets")
        if np.any(np.diff(ro) < 0):
            raise InvalidArgumentError("row offsets must be nondecreasing")
        if ci.size and (ci.min() < 0 or ci.max() >= self.ncols):
            raise InvalidArgumentError("column index out of range")
        if not np.isfinite(va).all():
            raise InvalidArgumentError("matrix holds non-finite values")
        rows = np.repeat(np.arange(self.nrows), np.diff(ro))
        same_row = rows[1:] == rows[:-1]
        if np.any(np.diff(ci)[same_row] <= 0):
            raise InvalidArgumentError("column indices must increase strictly within a row")
        for a in (ro, ci, va, rows):
            a.setflags(write=False)
        object.__setattr__(self, "row_offsets", ro)
        object.__setattr__(self, "col_indices", ci)
        object.__setattr__(self, "values", va)
        object.__setattr__(self, "_rows", rows)

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    @classmethod
    def from_triplets(cls, nrows, ncols, rows, cols, vals) -> "SparseMatrix":
        """Build from coordinate triplets; duplicate entries are summed."""
        coo = scipy.sparse.coo_matrix(
            (np.asarray(vals, dtype=float), (np.asarray(rows), np.asarray(cols))),
            shape=(nrows, ncols))
        csr = coo.tocsr()
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(nrows, ncols, csr.indptr, csr.indices, csr.data)

    @classmethod
    def from_dense(cls, a) -> "SparseMatrix":
        a = np.asarray(a, dtype=float)
        r, c = np.nonzero(a)
        return cls.from_triplets(a.shape[0], a.shape[1], r, c, a[r, c])

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        idx = np.arange(n)
        return cls(n, n, np.arange(n + 1), idx, np.ones(n))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.nrows, self.ncols))
        np.add.at(out, (self._rows, self.col_indices), self.values)
        return out

    def to_scipy(self):
        return scipy.sparse.csr_matrix(
            (self.values, self.col_indices, self.row_offsets), shape=self.shape)

    def diagonal(self) -> np.ndarray:
        d = np.zeros(min(self.nrows, self.ncols))
        on = self._rows == self.col_indices
        d[self._rows[on]] = self.values[on]
        return d

    def __matmul__(self, x):
        return spmv(self, x)


def spmv(A: SparseMatrix, x) -> np.ndarray:
    """``A @ x`` with a fixed summation order (entries of a row in column order)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (A.ncols,):
        raise InvalidArgumentError(f"vector of shape {x.shape} does not match {A.shape}")
    return np.bincount(A._rows, weights=A.values * x[A.col_indices], minlength=A.nrows)


def transpose(A: SparseMatrix) -> SparseMatrix:
    order = np.lexsort((A._rows, A.col_indices))
    counts = np.bincount(A.col_indices, minlength=A.ncols)
    offsets = np.concatenate(([0], np.cumsum(counts)))
    return SparseMatrix(A.ncols, A.nrows, offsets, A._rows[order], A.values[order])


def block(blocks) -> SparseMatrix:
    """Assemble a 2-D list of equally tiled blocks (``None`` for zero)."""
    rows, cols, vals = [], [], []
    heights = [next(b.nrows for b in row if b is not None) for row in blocks]
    widths = [next(blocks[i][j].ncols for i in range(len(blocks)) if blocks[i][j] is not None)
              for j in range(len(blocks[0]))]
    r0 = 0
    for bi, row in enumerate(blocks):
        c0 = 0
        for bj, b in enumerate(row):
            if b is not None:
                rows.append(b._rows + r0)
                cols.append(b.col_indices + c0)
                vals.append(b.values)
            c0 += widths[bj]
        r0 += heights[bi]
    return SparseMatrix.from_triplets(r0, c0, np.concatenate(rows),
                                      np.concatenate(cols), np.concatenate(vals))


def dump_coordinate(A: SparseMatrix, path) -> None:
    """Write ``row col value`` lines (0-based) for offline inspection."""
    with open(path, "w") as fh:
        for r, c, v in zip(A._rows, A.col_indices, A.values):
            fh.write(f"{r} {c} {v:.17g}\n")


def _check_system(A: SparseMatrix, b):
    b = np.asarray(b, dtype=float)
    if A.nrows != A.ncols:
        raise InvalidArgumentError("matrix must be square")
    if b.shape != (A.nrows,):
        raise InvalidArgumentError(f"right-hand side of shape {b.shape} does not match {A.shape}")
    return b


def solve_cg(A: SparseMatrix, b, tol: float = 1e-12, maxit: int | None = None, x0=None):
    """Jacobi-preconditioned conjugate gradients for SPD ``A``.

    Converged when the true residual satisfies ``|Ax - b|_2 <= tol*|b|_2``.
    Raises :class:`NonConvergenceError` (carrying the final residual) otherwise.
    """
    b = _check_system(A, b)
    if not tol > 0:
        raise InvalidArgumentError("tol must be positive")
    n = A.nrows
    maxit = 10 * n + 100 if maxit is None else maxit
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    target = tol * bnorm
    diag = A.diagonal()
    minv = 1.0 / diag if np.all(diag > 0) else np.ones(n)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - spmv(A, x)
    z = minv * r
    p = z.copy()
    rz = r @ z
    for _ in range(maxit):
        if np.linalg.norm(r) <= target:
            # guard against drift of the recursive residual
            r = b - spmv(A, x)
            if np.linalg.norm(r) <= target:
                return x
            z = minv * r
            p = z.copy()
            rz = r @ z
        Ap = spmv(A, p)
        pAp = p @ Ap
        if pAp <= 0:
            raise NonConvergenceError("CG: matrix is not positive definite",
                                      residual=float(np.linalg.norm(r)))
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = minv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = float(np.linalg.norm(b - spmv(A, x)))
    if res <= target:
        return x
    raise NonConvergenceError(
        f"CG did not reach tol={tol:g} in {maxit} iterations (residual {res:.3e})",
        residual=res)


def solve_bicgstab(A: SparseMatrix, b, tol: float = 1e-12, maxit: int | None = None,
                   x0=None, max_restarts: int = 5):
    """Right Jacobi-preconditioned BiCGStab.

    Jacobi scaling is used only when every diagonal entry is nonzero. On
    breakdown the shadow residual is reset up to ``max_restarts`` times; if the
    method still fails a :class:`NonConvergenceError` is raised and callers are
    expected to fall back to :func:`solve_dense` for small systems.
    """
    b = _check_system(A, b)
    if not tol > 0:
        raise InvalidArgumentError("tol must be positive")
    n = A.nrows
    maxit = 10 * n + 100 if maxit is None else maxit
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    target = tol * bnorm
    diag = A.diagonal()
    minv = 1.0 / diag if np.all(diag != 0) else np.ones(n)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - spmv(A, x)
    best_x, best_res = x.copy(), np.linalg.norm(r)
    restarts = 0
    it = 0
    while it < maxit:
        rhat = r.copy()
        rho = alpha = omega = 1.0
        v = np.zeros(n)
        p = np.zeros(n)
        broke = False
        while it < maxit:
            it += 1
            rho_new = rhat @ r
            if rho_new == 0.0 or omega == 0.0:
                broke = True
                break
            p = r + (rho_new / rho) * (alpha / omega) * (p - omega * v)
            rho = rho_new
            phat = minv * p
            v = spmv(A, phat)
            denom = rhat @ v
            if denom == 0.0:
                broke = True
                break
            alpha = rho / denom
            s = r - alpha * v
            if np.linalg.norm(s) <= target:
                x = x + alpha * phat
                r = b - spmv(A, x)
                if np.linalg.norm(r) <= target:
                    return x
                broke = True
                break
            shat = minv * s
            t = spmv(A, shat)
            tt = t @ t
            omega = (t @ s) / tt if tt > 0 else 0.0
            x = x + alpha * phat + omega * shat
            r = s - omega * t
            rn = np.linalg.norm(r)
            if rn < best_res:
                best_x, best_res = x.copy(), rn
            if rn <= target:
                r = b - spmv(A, x)
                if np.linalg.norm(r) <= target:
                    return x
                broke = True
                break
        if not broke:
            break
        restarts += 1
        if restarts > max_restarts:
            break
        x = best_x.copy()
        r = b - spmv(A, x)
    res = float(np.linalg.norm(b - spmv(A, best_x)))
    raise NonConvergenceError(
        f"BiCGStab did not reach tol={tol:g} ({it} iterations, {restarts} restarts, "
        f"residual {res:.3e}); use solve_dense for small systems",
        residual=res)


def solve_dense(A: SparseMatrix, b, cap: int = DENSE_CAP, return_residual: bool = False):
    """LU with partial pivoting on the densified matrix.

    Raises :class:`SingularMatrixError` when the reciprocal condition estimate
    falls below machine epsilon.
    """
    b = _check_system(A, b)
    if A.nrows > cap:
        raise InvalidArgumentError(f"dense solve limited to {cap} unknowns, got {A.nrows}")
    dense = A.to_dense()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(dense, check_finite=False)
    anorm = np.abs(dense).sum(axis=0).max()
    if anorm == 0.0 or np.any(np.diag(lu) == 0.0):
        raise SingularMatrixError("matrix is singular")
    rcond, info = scipy.linalg.lapack.dgecon(lu, anorm, norm="1")
    if info != 0 or rcond < np.finfo(float).eps:
        raise SingularMatrixError(f"matrix is singular to working precision (rcond={rcond:.2e})")
    x = scipy.linalg.lu_solve((lu, piv), b, check_finite=False)
    if return_residual:
        return x, float(np.linalg.norm(dense @ x - b, np.inf))
    return x


def solve_nonsymmetric(A: SparseMatrix, b, tol: float = 1e-12, maxit: int | None = None, x0=None):
    """BiCGStab, falling back to dense LU when it fails on a small enough system."""
    try:
        return solve_bicgstab(A, b, tol=tol, maxit=maxit, x0=x0)
    except NonConvergenceError:
        if A.nrows > DENSE_CAP:
            raise
        return solve_dense(A, b)
