"""Tracking cost, adjoint solves, reduced gradient, and steepest descent on the source.

The reduced gradient is the L2 Riesz representative
``2*q0*beta1*(f^2 + eps^2)^(q0-1)*f - p1``: at an optimum it vanishes, which is
the pointwise stationarity condition linking the control to the pressure
multiplier ``p1``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .coefficients import CoefficientModel
from .errors import InvalidArgumentError, NonConvergenceError, SingularMatrixError, StagnationError
from .grid import Field, l2_norm
from .linalg import solve_nonsymmetric, transpose
from .operators import StateSolution, assemble_adjoint_paper, assemble_linearized
from .state import SolverSettings, solve_state_newton

log = logging.getLogger(__name__)

ADJOINT_MODES = ("discrete", "paper")


@dataclass(frozen=True)
class ControlProblem:
    U: Field
    P: Field
    beta1: float = 0.1
    q0: float = 1.5
    eps_smooth: float = 1e-8

    def __post_init__(self):
        if not 1.0 < self.q0 < 2.0:
            raise InvalidArgumentError(f"q0 must lie in (1, 2), got {self.q0}")
        if not self.beta1 > 0:
            raise InvalidArgumentError(f"beta1 must be positive, got {self.beta1}")
        if not self.eps_smooth >= 0:
            raise InvalidArgumentError("eps_smooth must be >= 0")
        if self.U.grid != self.P.grid:
            raise InvalidArgumentError("targets live on different grids")
        if not (self.U.is_finite() and self.P.is_finite()):
            raise InvalidArgumentError("targets must be finite")

    @property
    def grid(self):
        return self.U.grid


@dataclass(frozen=True)
class AdjointSolution:
    e1: Field
    p1: Field


def _penalty_density(cp: ControlProblem, f: Field):
    e2 = cp.eps_smooth ** 2
    v = f.values
    if cp.eps_smooth == 0.0:
        return np.abs(v) ** (2 * cp.q0)
    # subtracting the same expression evaluated at f = 0 keeps J(., ., 0) exactly 0
    return (v * v + e2) ** cp.q0 - e2 ** cp.q0


def eval_cost(cp: ControlProblem, s: StateSolution, f: Field) -> float:
    """``1/2|u-U|^2 + 1/2|p-P|^2 + beta1 * int((f^2+eps^2)^q0 - eps^(2 q0))``.

    With ``eps_smooth = 0`` the last term is ``beta1 * |f|_{2 q0}^{2 q0}``.
    """
    for v in (s.u, s.p, f):
        if v.grid != cp.grid:
            raise InvalidArgumentError("fields live on a different grid than the targets")
    w = cp.grid.cell_area
    du = s.u.values - cp.U.values
    dp = s.p.values - cp.P.values
    tracking = 0.5 * w * (du @ du) + 0.5 * w * (dp @ dp)
    return float(tracking + cp.beta1 * w * np.sum(_penalty_density(cp, f)))


def solve_adjoint(mode: str, m: CoefficientModel, s: StateSolution, cp: ControlProblem,
                  st: SolverSettings = SolverSettings()) -> AdjointSolution:
    """Adjoint state ``(e1, p1)`` at a solved state.

    ``paper`` solves the continuous-form adjoint system discretized directly;
    ``discrete`` solves ``-J^T (e1, p1) = (u - U, p - P)`` with ``J`` the exact
    Jacobian of the discrete residual, which makes the reduced gradient exact
    for the discrete cost. Both use the same sign convention.
    """
    grid = s.grid
    rhs = np.concatenate([s.u.values - cp.U.values, s.p.values - cp.P.values])
    if mode == "paper":
        A = assemble_adjoint_paper(m, s)
        b = rhs
    elif mode == "discrete":
        A = transpose(assemble_linearized(m, s).A)
        b = -rhs
    else:
        raise InvalidArgumentError(f"unknown adjoint mode {mode!r}; choose from {ADJOINT_MODES}")
    x = solve_nonsymmetric(A, b, tol=st.tol_linear)
    n = grid.size
    return AdjointSolution(Field(grid, x[:n]), Field(grid, x[n:]))


def reduced_gradient(cp: ControlProblem, f: Field, adj: AdjointSolution) -> Field:
    if f.grid != adj.p1.grid:
        raise InvalidArgumentError("control and adjoint live on different grids")
    v = f.values
    if cp.eps_smooth == 0.0:
        dpen = 2 * cp.q0 * cp.beta1 * np.abs(v) ** (2 * cp.q0 - 2) * v
    else:
        dpen = 2 * cp.q0 * cp.beta1 * (v * v + cp.eps_smooth ** 2) ** (cp.q0 - 1) * v
    return Field(f.grid, dpen - adj.p1.values)


@dataclass
class Evaluation:
    """Everything known at one control iterate."""

    f: Field
    state: StateSolution
    J: float
    adjoint: AdjointSolution | None = None
    gradient: Field | None = None

    @property
    def stationarity_norm(self) -> float:
        return l2_norm(self.gradient)


def reduced_cost(cp, m, f, st=SolverSettings(), init=None):
    """``J(solve_state(f), f)``; returns ``(J, state)``."""
    s, _ = solve_state_newton(m, f, init, st)
    return eval_cost(cp, s, f), s


def evaluate(cp, m, f, st=SolverSettings(), mode="discrete", init=None) -> Evaluation:
    J, s = reduced_cost(cp, m, f, st, init)
    adj = solve_adjoint(mode, m, s, cp, st)
    return Evaluation(f, s, J, adj, reduced_gradient(cp, f, adj))


@dataclass(frozen=True)
class OptimizeOptions:
    max_outer: int = 200
    tol_stationarity: float = 1e-6
    step0: float = 1.0
    step_growth: float = 2.0
    adjoint_mode: str = "discrete"

    def __post_init__(self):
        if self.max_outer < 0:
            raise InvalidArgumentError("max_outer must be >= 0")
        if not self.tol_stationarity > 0 or not self.step0 > 0:
            raise InvalidArgumentError("tol_stationarity and step0 must be positive")
        if self.step_growth < 1:
            raise InvalidArgumentError("step_growth must be >= 1")


@dataclass
class OptimizeResult:
    f: Field
    state: StateSolution
    adjoint: AdjointSolution
    gradient: Field
    J: float
    stationarity_norm: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def optimize(cp: ControlProblem, m: CoefficientModel, f0: Field,
             st: SolverSettings = SolverSettings(),
             opt: OptimizeOptions = OptimizeOptions()) -> OptimizeResult:
    """Steepest descent on the reduced cost with Armijo backtracking.

    Each outer iteration tries ``t = min(step_growth * t_prev, ...)``, starting
    from ``step0``, and halves (``st.armijo_shrink``) until
    ``J(f - t g) <= J(f) - armijo_c * t * |g|^2``. Trial controls whose state
    or adjoint solve fails count as rejected. Stops when
    ``|g| <= tol_stationarity * |g_0|`` or after ``max_outer`` iterations.
    """
    if not f0.is_finite():
        raise InvalidArgumentError("initial control has non-finite entries")
    cur = evaluate(cp, m, f0, st, opt.adjoint_mode)
    g0 = cur.stationarity_norm
    target = opt.tol_stationarity * g0
    history = [{"iter": 0, "J": cur.J, "stationarity_norm": g0, "step": 0.0}]
    t_prev = opt.step0
    k = 0
    converged = g0 <= target
    while not converged and k < opt.max_outer:
        gnorm2 = cur.stationarity_norm ** 2
        t = opt.step0 if k == 0 else t_prev * opt.step_growth
        while True:
            trial_f = cur.f - t * cur.gradient
            trial = None
            try:
                J_trial, s_trial = reduced_cost(cp, m, trial_f, st, init=cur.state)
                if J_trial <= cur.J - st.armijo_c * t * gnorm2 and J_trial < cur.J:
                    trial = Evaluation(trial_f, s_trial, J_trial)
            except (NonConvergenceError, SingularMatrixError) as exc:
                log.debug("trial step %.3g rejected: %s", t, exc)
            if trial is not None:
                try:
                    trial.adjoint = solve_adjoint(opt.adjoint_mode, m, trial.state, cp, st)
                    trial.gradient = reduced_gradient(cp, trial_f, trial.adjoint)
                    break
                except (NonConvergenceError, SingularMatrixError) as exc:
                    log.debug("adjoint at step %.3g failed: %s", t, exc)
            t *= st.armijo_shrink
            if t < st.min_step:
                err = StagnationError(
                    f"no acceptable step at outer iteration {k + 1} "
                    f"(stationarity {cur.stationarity_norm:.3e})",
                    residual=cur.stationarity_norm, history=history)
                err.best = cur
                raise err
        k += 1
        cur = trial
        t_prev = t
        history.append({"iter": k, "J": cur.J, "stationarity_norm": cur.stationarity_norm, "step": t})
        log.debug("outer %d J %.6e |g| %.3e step %.3g", k, cur.J, cur.stationarity_norm, t)
        converged = cur.stationarity_norm <= target
    return OptimizeResult(cur.f, cur.state, cur.adjoint, cur.gradient, cur.J,
                          cur.stationarity_norm, k, bool(converged), history)
