"""Nonlinear solvers for the coupled saturation/pressure system.

Two routes reach the same discrete solution: a Picard sweep alternating a
pressure solve and a saturation solve, and damped Newton on the exact
Jacobian from :func:`deadoil.operators.assemble_linearized`. Both start from
zero, so they return the solution branch connected to ``u = p = 0``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .coefficients import CoefficientModel
from .errors import InvalidArgumentError, NonConvergenceError, StagnationError
from .grid import Field, l2_norm
from .linalg import solve_cg, solve_nonsymmetric
from .operators import (
    StateSolution,
    assemble_linearized,
    flux_matrix,
    laplacian,
    pressure_matrix,
    state_residual,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverSettings:
    tol_nonlinear: float = 1e-10
    maxit_nonlinear: int = 100
    tol_linear: float = 1e-12
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    min_step: float = 1e-8
    warm_start_sweeps: int = 3

    def __post_init__(self):
        for name in ("tol_nonlinear", "maxit_nonlinear", "tol_linear", "armijo_c", "min_step"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")
        if not 0 < self.armijo_shrink < 1:
            raise InvalidArgumentError("armijo_shrink must lie in (0, 1)")
        if self.warm_start_sweeps < 0:
            raise InvalidArgumentError("warm_start_sweeps must be >= 0")


def residual_norm(m, s: StateSolution, f: Field, aux_source=None) -> float:
    r1, r2 = state_residual(m, s, f, aux_source)
    return float(np.hypot(l2_norm(r1), l2_norm(r2)))


def _target(st: SolverSettings, f: Field) -> float:
    return st.tol_nonlinear * (1.0 + l2_norm(f))


def solve_pressure(m: CoefficientModel, u: Field, f: Field, st: SolverSettings = SolverSettings()) -> Field:
    """Solve ``-div_h(d(u) grad_h p) = f`` by CG."""
    if u.grid != f.grid:
        raise InvalidArgumentError("u and f live on different grids")
    A = pressure_matrix(m, u)
    return Field(u.grid, solve_cg(A, f.values, tol=st.tol_linear))


def solve_saturation(m: CoefficientModel, u_prev: Field, p: Field,
                     st: SolverSettings = SolverSettings(), aux_source: Field | None = None) -> Field:
    """One saturation update with ``g`` frozen at ``u_prev``.

    Solves ``-Delta_h(phi(u_new)) = div_h(g(u_prev) grad_h p) (+ s1)`` for the
    nodal values of ``phi(u_new)`` with CG, then inverts ``phi`` node by node
    (starting from ``u_prev``). For ``phi(r) = r`` this is a single linear solve
    in ``u_new``.
    """
    grid = u_prev.grid
    if p.grid != grid:
        raise InvalidArgumentError("u_prev and p live on different grids")
    zero = np.zeros(1)
    g0 = float(m.gfun(zero)[0])
    rhs = -(flux_matrix(grid, m.gfun(u_prev.values), g0) @ p.values)
    if aux_source is not None:
        rhs = rhs + aux_source.values
    z = solve_cg(laplacian(grid), rhs, tol=st.tol_linear)
    u_new = m.invert_phi(z + m.phi(zero)[0], guess=u_prev.values)
    return Field(grid, u_new)


def solve_state_picard(m: CoefficientModel, f: Field, st: SolverSettings = SolverSettings(),
                       init: StateSolution | None = None, aux_source: Field | None = None,
                       maxit: int | None = None):
    """Alternate pressure and saturation solves until the full residual is small.

    Returns ``(state, log)`` where ``log`` holds one ``{iter, residual, step}``
    record per sweep; ``step`` is the max-norm change of ``(u, p)``.
    """
    if not f.is_finite():
        raise InvalidArgumentError("source field has non-finite entries")
    grid = f.grid
    s = init if init is not None else StateSolution.zeros(grid)
    target = _target(st, f)
    maxit = st.maxit_nonlinear if maxit is None else maxit
    history = []
    for k in range(1, maxit + 1):
        p = solve_pressure(m, s.u, f, st)
        u = solve_saturation(m, s.u, p, st, aux_source)
        step = max((u - s.u).max_abs(), (p - s.p).max_abs())
        s = StateSolution(u, p)
        res = residual_norm(m, s, f, aux_source)
        history.append({"iter": k, "residual": res, "step": step})
        log.debug("picard %d residual %.3e", k, res)
        if not np.isfinite(res):
            break
        if res <= target:
            return s, history
    raise NonConvergenceError(
        f"Picard iteration did not converge in {maxit} sweeps "
        f"(residual {history[-1]['residual']:.3e}, target {target:.3e})",
        residual=history[-1]["residual"], history=history)


def solve_state_newton(m: CoefficientModel, f: Field, init: StateSolution | None = None,
                       st: SolverSettings = SolverSettings(), aux_source: Field | None = None):
    """Damped Newton with Armijo backtracking on the squared residual norm.

    Without ``init`` a few Picard sweeps from zero provide the starting point.
    Returns ``(state, log)``; log records carry ``iter``, ``residual``, ``step``
    (the accepted damping factor) and, once defined, ``rate`` =
    ``log(r_k/r_{k-1}) / log(r_{k-1}/r_{k-2})`` (about 2 when quadratic).
    """
    if not f.is_finite():
        raise InvalidArgumentError("source field has non-finite entries")
    grid = f.grid
    target = _target(st, f)
    if init is None:
        s = StateSolution.zeros(grid)
        for _ in range(st.warm_start_sweeps):
            p = solve_pressure(m, s.u, f, st)
            s = StateSolution(solve_saturation(m, s.u, p, st, aux_source), p)
    else:
        if init.grid != grid:
            raise InvalidArgumentError("init and f live on different grids")
        s = init

    def residual_vec(state):
        r1, r2 = state_residual(m, state, f, aux_source)
        return np.concatenate([r1.values, r2.values])

    w = np.sqrt(grid.cell_area)
    F = residual_vec(s)
    res = w * np.linalg.norm(F)
    history = [{"iter": 0, "residual": float(res), "step": 0.0}]
    for k in range(1, st.maxit_nonlinear + 1):
        if res <= target:
            return s, history
        J = assemble_linearized(m, s)
        delta = solve_nonsymmetric(J.A, -F, tol=st.tol_linear)
        x = s.stacked()
        t = 1.0
        phi0 = F @ F
        while True:
            trial = StateSolution.from_stacked(grid, x + t * delta)
            F_trial = residual_vec(trial)
            if np.isfinite(F_trial).all() and F_trial @ F_trial <= (1.0 - 2.0 * st.armijo_c * t) * phi0:
                break
            t *= st.armijo_shrink
            if t < st.min_step:
                raise StagnationError(
                    f"Newton line search stalled at iteration {k} (residual {res:.3e})",
                    residual=float(res), history=history)
        s, F = trial, F_trial
        res = w * np.linalg.norm(F)
        rec = {"iter": k, "residual": float(res), "step": t}
        if len(history) >= 2 and res > 0:
            r0, r1 = history[-2]["residual"], history[-1]["residual"]
            if r0 > r1 > 0 and r1 != res:
                rec["rate"] = float(np.log(res / r1) / np.log(r1 / r0))
        history.append(rec)
        log.debug("newton %d residual %.3e step %.3g", k, res, t)
    if res <= target:
        return s, history
    raise NonConvergenceError(
        f"Newton did not converge in {st.maxit_nonlinear} iterations (residual {res:.3e})",
        residual=float(res), history=history)


def solve_state(m: CoefficientModel, f: Field, st: SolverSettings = SolverSettings(),
                method: str = "newton", aux_source: Field | None = None):
    """Dispatch to Newton (default) or Picard."""
    if method == "newton":
        return solve_state_newton(m, f, None, st, aux_source)
    if method == "picard":
        return solve_state_picard(m, f, st, aux_source=aux_source)
    raise InvalidArgumentError(f"unknown method {method!r}")
