"""Finite-difference solver and adjoint-based source control for the steady dead oil isotherm system."""
from .coefficients import CoefficientModel, builtin_model, polynomial_model, validate_bounds
from .control import (
    AdjointSolution,
    ControlProblem,
    OptimizeOptions,
    eval_cost,
    optimize,
    reduced_gradient,
    solve_adjoint,
)
from .errors import (
    ConfigError,
    InvalidArgumentError,
    NonConvergenceError,
    SingularMatrixError,
    StagnationError,
)
from .grid import Field, Grid, create_grid, inner_product, lp_power_norm
from .operators import StateSolution, assemble_adjoint_paper, assemble_linearized, state_residual
from .state import (
    SolverSettings,
    solve_pressure,
    solve_saturation,
    solve_state,
    solve_state_newton,
    solve_state_picard,
)

__version__ = "0.1.0"
