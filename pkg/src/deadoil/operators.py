"""Discrete state residual, its Jacobian, and the continuous-form adjoint operator.

Conventions
-----------
``D(a) p = -div_h(a grad_h p)`` is the conservative 5-point operator whose face
coefficient is the arithmetic mean of the two adjacent nodal values; the
boundary node carries ``a(0)`` because ``u`` vanishes there. ``L = D(1)`` is
the (positive) 5-point Laplacian. The discrete residual is

    F1 = L (phi(u) - phi(0)) + D(g(u)) p - s1
    F2 = D(d(u)) p - f

where ``s1`` is a verification-only source (zero for the physical system).
Stacked unknown vectors are always ``[u-block, p-block]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coefficients import CoefficientModel
from .errors import InvalidArgumentError
from .grid import Field, Grid
from .linalg import SparseMatrix, block, spmv


@dataclass(frozen=True)
class StateSolution:
    u: Field
    p: Field

    def __post_init__(self):
        if self.u.grid != self.p.grid:
            raise InvalidArgumentError("u and p live on different grids")

    @property
    def grid(self) -> Grid:
        return self.u.grid

    @classmethod
    def zeros(cls, grid: Grid) -> "StateSolution":
        return cls(Field.zeros(grid), Field.zeros(grid))

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.u.values, self.p.values])

    @classmethod
    def from_stacked(cls, grid: Grid, x) -> "StateSolution":
        n = grid.size
        return cls(Field(grid, x[:n]), Field(grid, x[n:]))

    def outside_validity(self, m: CoefficientModel) -> int:
        """Number of nodes where ``u`` leaves the model's validity interval."""
        lo, hi = m.validity_interval
        v = self.u.values
        return int(np.count_nonzero((v < lo) | (v > hi)))


@dataclass(frozen=True)
class LinearizedOperator:
    """Jacobian of the discrete residual with respect to ``(u, p)``.

    The control enters only through ``dF2/df = -I``; that block is recorded by
    ``control_coupling`` rather than stored.
    """

    A: SparseMatrix
    grid: Grid
    control_coupling: float = -1.0

    def apply(self, e: Field, w: Field, h: Field | None = None):
        y = spmv(self.A, np.concatenate([e.values, w.values]))
        n = self.grid.size
        r2 = y[n:]
        if h is not None:
            r2 = r2 + self.control_coupling * h.values
        return Field(self.grid, y[:n]), Field(self.grid, r2)


# -- stencil helpers --------------------------------------------------------

def _pad(a2d, bval):
    return np.pad(a2d, 1, mode="constant", constant_values=bval)


def _apply_flux(grid: Grid, a_pad, p2d):
    """``-div_h(a grad_h p)`` with face coefficients from padded nodal ``a``."""
    P = _pad(p2d, 0.0)
    ax = 0.5 * (a_pad[1:, 1:-1] + a_pad[:-1, 1:-1])
    ay = 0.5 * (a_pad[1:-1, 1:] + a_pad[1:-1, :-1])
    fx = ax * (P[1:, 1:-1] - P[:-1, 1:-1]) / grid.hx
    fy = ay * (P[1:-1, 1:] - P[1:-1, :-1]) / grid.hy
    return -(fx[1:, :] - fx[:-1, :]) / grid.hx - (fy[:, 1:] - fy[:, :-1]) / grid.hy


def _padded_index(grid: Grid):
    idx = np.arange(grid.size).reshape(grid.nx, grid.ny)
    return _pad(idx, -1)


def _faces(grid: Grid):
    """Yield ``(left, right, h, take)`` per axis.

    ``left``/``right`` are flat node indices (-1 on the boundary) and
    ``take(X_pad)`` returns the left/right values of a padded nodal array.
    """
    I = _padded_index(grid)
    yield (I[:-1, 1:-1], I[1:, 1:-1], grid.hx,
           lambda X: (X[:-1, 1:-1], X[1:, 1:-1]))
    yield (I[1:-1, :-1], I[1:-1, 1:], grid.hy,
           lambda X: (X[1:-1, :-1], X[1:-1, 1:]))


class _Triplets:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []

    def flux(self, left, right, h, col, coef):
        """Add a face flux that depends on unknown ``col`` with weight ``coef``.

        The flux contributes ``+flux/h`` to its left node and ``-flux/h`` to
        its right node.
        """
        for node, sign in ((left, 1.0), (right, -1.0)):
            mask = (node >= 0) & (col >= 0)
            self.rows.append(node[mask])
            self.cols.append(col[mask])
            self.vals.append(sign * coef[mask] / h)

    def add(self, rows, cols, vals):
        mask = (rows >= 0) & (cols >= 0)
        self.rows.append(rows[mask])
        self.cols.append(cols[mask])
        self.vals.append(vals[mask])

    def build(self, n) -> SparseMatrix:
        if not self.rows:
            return SparseMatrix.from_triplets(n, n, [], [], [])
        return SparseMatrix.from_triplets(n, n, np.concatenate(self.rows),
                                          np.concatenate(self.cols),
                                          np.concatenate(self.vals))


def flux_matrix(grid: Grid, a_nodal, a_boundary: float) -> SparseMatrix:
    """Matrix of ``D(a)``; symmetric by construction."""
    A = _pad(np.asarray(a_nodal, float).reshape(grid.nx, grid.ny), a_boundary)
    t = _Triplets()
    for left, right, h, take in _faces(grid):
        aL, aR = take(A)
        af = 0.5 * (aL + aR)
        t.flux(left, right, h, right, -af / h)
        t.flux(left, right, h, left, af / h)
    return t.build(grid.size)


def laplacian(grid: Grid) -> SparseMatrix:
    """Positive 5-point Laplacian ``-Delta_h`` with zero Dirichlet boundary."""
    return flux_matrix(grid, np.ones(grid.size), 1.0)


def scaled_laplacian(grid: Grid, s_nodal) -> SparseMatrix:
    """``L diag(s)``, i.e. ``e -> -Delta_h(s e)``."""
    S = _pad(np.asarray(s_nodal, float).reshape(grid.nx, grid.ny), 0.0)
    t = _Triplets()
    for left, right, h, take in _faces(grid):
        sL, sR = take(S)
        t.flux(left, right, h, right, -sR / h)
        t.flux(left, right, h, left, sL / h)
    return t.build(grid.size)


def coefficient_derivative_matrix(grid: Grid, da_nodal, p: Field) -> SparseMatrix:
    """Derivative of ``u -> D(a(u)) p`` in direction ``e`` (``da = a'(u)``).

    The face coefficient is the mean of nodal values, so its derivative is the
    mean of nodal ``a'(u) e``.
    """
    DA = _pad(np.asarray(da_nodal, float).reshape(grid.nx, grid.ny), 0.0)
    P = _pad(p.as_array(), 0.0)
    t = _Triplets()
    for left, right, h, take in _faces(grid):
        daL, daR = take(DA)
        pL, pR = take(P)
        dp = (pR - pL) / h
        t.flux(left, right, h, left, -0.5 * daL * dp)
        t.flux(left, right, h, right, -0.5 * daR * dp)
    return t.build(grid.size)


def central_gradient(v: Field):
    """Nodal ``(dv/dx, dv/dy)`` by central differences with zero boundary values."""
    g = v.grid
    V = _pad(v.as_array(), 0.0)
    gx = (V[2:, 1:-1] - V[:-2, 1:-1]) / (2 * g.hx)
    gy = (V[1:-1, 2:] - V[1:-1, :-2]) / (2 * g.hy)
    return gx.ravel(), gy.ravel()


def advection_matrix(grid: Grid, bx, by) -> SparseMatrix:
    """Matrix of ``e -> bx * de/dx + by * de/dy`` with central differences."""
    I = _padded_index(grid)
    center = I[1:-1, 1:-1].ravel()
    t = _Triplets()
    cx = np.asarray(bx, float) / (2 * grid.hx)
    cy = np.asarray(by, float) / (2 * grid.hy)
    t.add(center, I[2:, 1:-1].ravel(), cx)
    t.add(center, I[:-2, 1:-1].ravel(), -cx)
    t.add(center, I[1:-1, 2:].ravel(), cy)
    t.add(center, I[1:-1, :-2].ravel(), -cy)
    return t.build(grid.size)


# -- public operations ------------------------------------------------------

def _check_grids(*fields):
    g = fields[0].grid
    for f in fields[1:]:
        if f is not None and f.grid != g:
            raise InvalidArgumentError("fields live on different grids")
    return g


def state_residual(m: CoefficientModel, s: StateSolution, f: Field, aux_source: Field | None = None):
    """Return ``(r1, r2)`` of the discrete system.

    ``aux_source`` is a manufactured-solution source added to the saturation
    equation; leave it ``None`` for the physical problem.
    """
    grid = _check_grids(s.u, s.p, f, aux_source)
    u2 = s.u.as_array()
    p2 = s.p.as_array()
    zero = np.zeros(1)
    phi_shift = _pad(m.phi(u2) - m.phi(zero)[0], 0.0)
    ones = np.ones_like(phi_shift)
    r1 = (_apply_flux(grid, ones, phi_shift[1:-1, 1:-1])
          + _apply_flux(grid, _pad(m.gfun(u2), m.gfun(zero)[0]), p2))
    r2 = _apply_flux(grid, _pad(m.dfun(u2), m.dfun(zero)[0]), p2) - f.as_array()
    if aux_source is not None:
        r1 = r1 - aux_source.as_array()
    return Field(grid, r1), Field(grid, r2)


def pressure_matrix(m: CoefficientModel, u: Field) -> SparseMatrix:
    """``D(d(u))``: SPD whenever ``d > 0``."""
    return flux_matrix(u.grid, m.dfun(u.values), float(m.dfun(np.zeros(1))[0]))


def assemble_linearized(m: CoefficientModel, s: StateSolution) -> LinearizedOperator:
    """Exact Jacobian of :func:`state_residual` with respect to ``(u, p)``.

    Blocks: ``dF1/du = L diag(phi'(u)) + C(g', p)``, ``dF1/dp = D(g(u))``,
    ``dF2/du = C(d', p)``, ``dF2/dp = D(d(u))``. ``L diag(phi'(u))`` covers both
    the ``phi'`` and ``phi''`` terms of the continuous derivative.
    """
    grid = s.grid
    u = s.u.values
    zero = np.zeros(1)
    J_uu = _sum(scaled_laplacian(grid, m.dphi(u)),
                coefficient_derivative_matrix(grid, m.dg(u), s.p))
    J_up = flux_matrix(grid, m.gfun(u), float(m.gfun(zero)[0]))
    J_pu = coefficient_derivative_matrix(grid, m.dd(u), s.p)
    J_pp = flux_matrix(grid, m.dfun(u), float(m.dfun(zero)[0]))
    return LinearizedOperator(block([[J_uu, J_up], [J_pu, J_pp]]), grid)


def assemble_adjoint_paper(m: CoefficientModel, s: StateSolution) -> SparseMatrix:
    """Continuous-form adjoint operator on stacked ``(e1, p1)``.

    Row block 1: ``div(phi'(u) grad e1) - d'(u) grad p . grad p1
    - phi''(u) grad u . grad e1 - g'(u) grad p . grad e1``;
    row block 2: ``div(d(u) grad p1) + div(g(u) grad e1)``. The right-hand side
    pairing with this operator is ``(u - U, p - P)``. Divergence terms use the
    flux form, first-order terms central differences.
    """
    grid = s.grid
    u = s.u.values
    zero = np.zeros(1)
    ux, uy = central_gradient(s.u)
    px, py = central_gradient(s.p)
    d2phi, dg, dd = m.d2phi(u), m.dg(u), m.dd(u)

    D_phi = flux_matrix(grid, m.dphi(u), float(m.dphi(zero)[0]))
    V_e = advection_matrix(grid, d2phi * ux + dg * px, d2phi * uy + dg * py)
    V_p = advection_matrix(grid, dd * px, dd * py)
    D_g = flux_matrix(grid, m.gfun(u), float(m.gfun(zero)[0]))
    D_d = flux_matrix(grid, m.dfun(u), float(m.dfun(zero)[0]))
    return block([[_sum(D_phi, V_e, scale=-1.0), _sum(V_p, scale=-1.0)],
                  [_sum(D_g, scale=-1.0), _sum(D_d, scale=-1.0)]])


def _sum(*mats, scale=1.0) -> SparseMatrix:
    rows = np.concatenate([a._rows for a in mats])
    cols = np.concatenate([a.col_indices for a in mats])
    vals = scale * np.concatenate([a.values for a in mats])
    return SparseMatrix.from_triplets(mats[0].nrows, mats[0].ncols, rows, cols, vals)
