"""Verification cases producing self-contained, machine-readable reports.

Grid sizes passed to the convergence cases are cell counts per axis on the unit
square (``h = 1/n``, ``n - 1`` interior nodes), so successive entries of
``(16, 32, 64)`` halve ``h`` exactly and orders are ``log2(e_h / e_{h/2})``.
"""
from __future__ import annotations

import json
import math
import operator
from dataclasses import asdict, dataclass, field

import numpy as np
import sympy as sp

from .coefficients import CoefficientModel, builtin_model
from .control import ControlProblem, evaluate, reduced_cost
from .errors import InvalidArgumentError
from .grid import Field, create_grid, inner_product, l2_norm
from .operators import StateSolution, assemble_linearized, state_residual
from .state import SolverSettings, solve_pressure, solve_state_newton, solve_state_picard

DEFAULT_SEED = 0x5EED

_OPS = {">=": operator.ge, "<=": operator.le}


@dataclass
class Check:
    name: str
    value: float
    op: str
    threshold: float

    @property
    def passed(self) -> bool:
        return bool(_OPS[self.op](self.value, self.threshold))


@dataclass
class VerificationReport:
    case: str
    grids: list
    errors: dict = field(default_factory=dict)
    observed_orders: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    seed: int | None = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name, value, op, threshold):
        self.checks.append(Check(name, float(value), op, float(threshold)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return _jsonable(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def recompute_pass(report: dict) -> bool:
    """Re-derive the pass flag of a serialized report from its checks."""
    return all(_OPS[c["op"]](float(c["value"]), float(c["threshold"])) for c in report["checks"])


def observed_order(e_coarse: float, e_fine: float, ratio: float = 2.0) -> float:
    if e_fine == 0.0:
        return math.inf
    if e_coarse == 0.0:
        return -math.inf
    return math.log(e_coarse / e_fine) / math.log(ratio)


def _check_grids(grids):
    grids = [int(n) for n in grids]
    if len(grids) < 2:
        raise InvalidArgumentError("a convergence study needs at least two grids")
    if any(b <= a for a, b in zip(grids, grids[1:])) or grids[0] < 2:
        raise InvalidArgumentError("grids must be strictly increasing cell counts >= 2")
    return grids


def _unit_grid(n):
    return create_grid(n - 1, n - 1, 1.0, 1.0)


# -- manufactured solutions -------------------------------------------------

ORDER_MIN = 1.8


def mms_pressure(grids=(32, 64, 128), st: SolverSettings = SolverSettings()) -> VerificationReport:
    """Pressure equation alone with ``d = 1``: ``p* = sin(pi x) sin(pi y)``."""
    grids = _check_grids(grids)
    m = builtin_model("verification_constant")
    exact = lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y)
    rep = VerificationReport("mms_pressure", grids, tolerances={"order_min": ORDER_MIN})
    errs = []
    for n in grids:
        g = _unit_grid(n)
        f = Field.from_function(g, lambda x, y: 2 * np.pi ** 2 * exact(x, y))
        p = solve_pressure(m, Field.zeros(g), f, st)
        errs.append((p - Field.from_function(g, exact)).max_abs())
    rep.errors["p"] = errs
    rep.observed_orders["p"] = [observed_order(a, b, n2 / n1) for a, b, n1, n2
                                in zip(errs, errs[1:], grids, grids[1:])]
    for i, q in enumerate(rep.observed_orders["p"]):
        rep.check(f"order_p[{grids[i]}->{grids[i + 1]}]", q, ">=", ORDER_MIN)
    return rep


_X, _Y = sp.symbols("x y", real=True)


def _symbolic_smooth_bounded():
    """Symbolic twins of the ``smooth_bounded`` coefficients (independent of the numeric ones)."""
    return (lambda r: 2 + r + sp.Rational(1, 5) * sp.log(sp.cosh(r)),
            lambda r: 1 + sp.Rational(1, 4) * sp.tanh(r),
            lambda r: 1 + sp.Rational(1, 2) * sp.tanh(r))


def manufactured_coupled(amplitude: float = 0.1):
    """Return numpy callables ``(u*, p*, s1, f)`` for the coupled system.

    ``s1`` is the extra saturation-equation source that makes ``(u*, p*)`` exact.
    """
    phi, g, d = _symbolic_smooth_bounded()
    A = sp.nsimplify(amplitude)
    u = A * sp.sin(sp.pi * _X) * sp.sin(sp.pi * _Y)
    p = A * sp.sin(sp.pi * _X) * sp.sin(2 * sp.pi * _Y)

    def div_grad(a, v):
        return sp.diff(a * sp.diff(v, _X), _X) + sp.diff(a * sp.diff(v, _Y), _Y)

    phi_u = phi(u)
    lap_phi = sp.diff(phi_u, _X, 2) + sp.diff(phi_u, _Y, 2)
    s1 = -lap_phi - div_grad(g(u), p)
    f = -div_grad(d(u), p)
    to_np = lambda e: sp.lambdify((_X, _Y), e, "numpy")
    wrap = lambda fn: (lambda x, y: np.broadcast_to(fn(x, y), np.shape(x)).astype(float))
    return tuple(wrap(to_np(e)) for e in (u, p, s1, f))


def mms_coupled(grids=(16, 32, 64), amplitude: float = 0.1,
                st: SolverSettings = SolverSettings()) -> VerificationReport:
    """Coupled system with ``smooth_bounded`` and an auxiliary saturation source.

    Records max-norm errors in ``u`` and ``p``, their observed orders, and the
    max-norm gap between the Picard and Newton solutions on every grid.
    """
    grids = _check_grids(grids)
    m = builtin_model("smooth_bounded")
    u_ex, p_ex, s1_fn, f_fn = manufactured_coupled(amplitude)
    rep = VerificationReport("mms_coupled", grids,
                             tolerances={"order_min": ORDER_MIN, "picard_newton_max": 1e-8},
                             details={"amplitude": amplitude})
    eu, ep, gaps = [], [], []
    for n in grids:
        g = _unit_grid(n)
        f = Field.from_function(g, f_fn)
        s1 = Field.from_function(g, s1_fn)
        sN, _ = solve_state_newton(m, f, None, st, aux_source=s1)
        sP, _ = solve_state_picard(m, f, st, aux_source=s1)
        eu.append((sN.u - Field.from_function(g, u_ex)).max_abs())
        ep.append((sN.p - Field.from_function(g, p_ex)).max_abs())
        gaps.append((sN.u - sP.u).max_abs() + (sN.p - sP.p).max_abs())
    rep.errors = {"u": eu, "p": ep}
    rep.details["picard_newton_gap"] = gaps
    for name, errs in rep.errors.items():
        orders = [observed_order(a, b, n2 / n1) for a, b, n1, n2
                  in zip(errs, errs[1:], grids, grids[1:])]
        rep.observed_orders[name] = orders
        for i, q in enumerate(orders):
            rep.check(f"order_{name}[{grids[i]}->{grids[i + 1]}]", q, ">=", ORDER_MIN)
    for n, gap in zip(grids, gaps):
        rep.check(f"picard_newton_gap[{n}]", gap, "<=", 1e-8)
    return rep


# -- derivative checks ------------------------------------------------------

TAYLOR_ORDER_MIN = 1.9
ROUNDOFF = 64 * np.finfo(float).eps


def taylor_delta_f(samples: int = 5, n: int = 8, model: CoefficientModel | None = None,
                   seed: int = DEFAULT_SEED, s0: float = 1e-2, halvings: int = 4,
                   zero_state: bool = False) -> VerificationReport:
    """Taylor remainder of the discrete residual against the assembled Jacobian.

    For each sample: random ``(u, p)`` within ``[-1, 1]`` (or zero), random ``f``,
    random unit direction; ``R(s) = |F(x + s d) - F(x) - s J d|`` over
    ``s0 / 2**k``. A sample passes when its mean observed order is at least 1.9;
    a remainder identically zero marks the map as linear along ``d`` (order inf).
    """
    if samples < 1:
        raise InvalidArgumentError("samples must be >= 1")
    m = model or builtin_model("smooth_bounded")
    g = _unit_grid(n)
    rng = np.random.default_rng(seed)
    steps = [s0 / 2 ** k for k in range(halvings + 1)]
    rep = VerificationReport("taylor_delta_f", [n], seed=seed,
                             tolerances={"mean_order_min": TAYLOR_ORDER_MIN},
                             details={"model": m.name, "steps": steps})
    N = g.size

    def F(x, f):
        r1, r2 = state_residual(m, StateSolution.from_stacked(g, x), f)
        return np.concatenate([r1.values, r2.values])

    for k in range(samples):
        if zero_state:
            x = np.zeros(2 * N)
        else:
            x = rng.uniform(-1.0, 1.0, 2 * N)
        f = Field(g, rng.normal(size=N))
        d = rng.normal(size=2 * N)
        d /= np.linalg.norm(d)
        J = assemble_linearized(m, StateSolution.from_stacked(g, x)).A
        F0, Jd = F(x, f), J @ d
        R, floors = [], []
        for s in steps:
            Fs = F(x + s * d, f)
            R.append(float(np.linalg.norm(Fs - F0 - s * Jd)))
            floors.append(float(ROUNDOFF * (np.linalg.norm(Fs) + np.linalg.norm(F0) + s * np.linalg.norm(Jd))))
        orders = [observed_order(a, b) for a, b in zip(R, R[1:])]
        rep.errors[f"sample_{k}"] = R
        rep.errors[f"sample_{k}_roundoff_floor"] = floors
        rep.observed_orders[f"sample_{k}"] = orders
        # remainder at rounding level everywhere: the map is linear along d
        exact = all(r <= fl for r, fl in zip(R, floors))
        mean = math.inf if exact else float(np.mean(orders))
        rep.check(f"mean_order[sample_{k}]", mean, ">=", TAYLOR_ORDER_MIN)
    return rep


def _fd_directional(cp, m, f, d, gd, st, steps):
    """Central-difference slopes of the reduced cost; error at each step."""
    out = []
    for s in steps:
        Jp, _ = reduced_cost(cp, m, f + s * d, st)
        Jm, _ = reduced_cost(cp, m, f - s * d, st)
        fd = (Jp - Jm) / (2 * s)
        out.append((s, fd, _slope_error(gd, fd)))
    return out


def _slope_error(a, b):
    if abs(a) <= GRADIENT_ATOL and abs(b) <= GRADIENT_ATOL:
        return 0.0
    return abs(a - b) / max(abs(a), abs(b))


def _default_problem(g, beta1, q0, f_fn=None, targets=None):
    f_fn = f_fn or (lambda x, y: 20.0 * np.exp(-((x - 0.4) ** 2 + (y - 0.6) ** 2) / (2 * 0.12 ** 2)))
    U_fn, P_fn = targets or (lambda x, y: 0.3 * np.sin(np.pi * x) * np.sin(np.pi * y),
                             lambda x, y: 0.2 * np.sin(np.pi * x) * np.sin(2 * np.pi * y))
    cp = ControlProblem(Field.from_function(g, U_fn), Field.from_function(g, P_fn), beta1=beta1, q0=q0)
    return cp, Field.from_function(g, f_fn)


GRADIENT_TOL = 1e-5
# both slopes below this count as agreeing zero derivatives
GRADIENT_ATOL = 1e-10
REFINE_RATIO_MIN = 1.5


def gradient_check(model: CoefficientModel | None = None, n: int = 8, samples: int = 3,
                   beta1: float = 0.1, q0: float = 1.5, f_fn=None, targets=None,
                   noise: float = 1.0, seed: int = DEFAULT_SEED,
                   st: SolverSettings = SolverSettings()) -> VerificationReport:
    """Reduced gradient against central differences of the reduced cost.

    The control is ``f_fn`` plus Gaussian nodal noise of size ``noise``; the
    directions are random with unit L2 norm. Discrete-mode errors must be at
    most 1e-5 at the best step of ``1e-1 .. 1e-6``. The paper-mode gradient is
    compared on ``n`` and ``2n`` against the discrete one, and that gap must
    shrink by at least 1.5.
    """
    if n > 32:
        raise InvalidArgumentError("gradient_check limited to n <= 32 (finite-difference cost)")
    if samples < 1:
        raise InvalidArgumentError("samples must be >= 1")
    m = model or builtin_model("smooth_bounded")
    rng = np.random.default_rng(seed)
    steps = [10.0 ** -k for k in range(1, 7)]
    rep = VerificationReport("gradient_check", [n, 2 * n], seed=seed,
                             tolerances={"discrete_rel_err": GRADIENT_TOL,
                                         "zero_slope_atol": GRADIENT_ATOL,
                                         "paper_refinement_ratio": REFINE_RATIO_MIN},
                             details={"model": m.name, "beta1": beta1, "q0": q0, "fd_steps": steps})
    g = _unit_grid(n)
    cp, f = _default_problem(g, beta1, q0, f_fn, targets)
    f = f + Field(g, noise * rng.normal(size=g.size))
    ev = evaluate(cp, m, f, st, "discrete")
    ev_paper = evaluate(cp, m, f, st, "paper", init=ev.state)
    disc, paper = [], []
    for k in range(samples):
        d = Field(g, rng.normal(size=g.size))
        d = d * (1.0 / l2_norm(d))
        gd = inner_product(ev.gradient, d)
        table = _fd_directional(cp, m, f, d, gd, st, steps)
        best = min(table, key=lambda t: t[2])
        disc.append(best[2])
        gp = inner_product(ev_paper.gradient, d)
        paper.append(_slope_error(gp, best[1]))
        rep.details[f"sample_{k}"] = {"directional": gd, "fd_best_step": best[0], "fd": best[1]}
        rep.check(f"discrete_rel_err[sample_{k}]", best[2], "<=", GRADIENT_TOL)
    rep.errors["discrete"] = disc
    rep.errors["paper_directional"] = paper

    gaps = []
    for nn in (n, 2 * n):
        gg = _unit_grid(nn)
        cpn, fn = _default_problem(gg, beta1, q0, f_fn, targets)
        a = evaluate(cpn, m, fn, st, "discrete")
        b = evaluate(cpn, m, fn, st, "paper", init=a.state)
        den = l2_norm(a.gradient)
        gaps.append(l2_norm(a.gradient - b.gradient) / den if den > 0 else 0.0)
    rep.errors["paper_vs_discrete_gradient"] = gaps
    ratio = gaps[0] / gaps[1] if gaps[1] > 0 else math.inf
    rep.observed_orders["paper_vs_discrete_gradient"] = [observed_order(*gaps)]
    rep.check("paper_gap_ratio", ratio if gaps[0] > 0 else math.inf, ">=", REFINE_RATIO_MIN)
    return rep


def adjoint_consistency(grids=(8, 16, 32), model: CoefficientModel | None = None,
                        beta1: float = 0.1, q0: float = 1.5, f_fn=None, targets=None,
                        st: SolverSettings = SolverSettings()) -> VerificationReport:
    """Relative gap between paper-mode and discrete-mode adjoint states under refinement."""
    from .control import solve_adjoint

    grids = _check_grids(grids)
    m = model or builtin_model("smooth_bounded")
    rep = VerificationReport("adjoint_consistency", grids,
                             tolerances={"refinement_ratio_min": REFINE_RATIO_MIN},
                             details={"model": m.name})
    gaps = []
    for n in grids:
        g = _unit_grid(n)
        cp, f = _default_problem(g, beta1, q0, f_fn, targets)
        s, _ = solve_state_newton(m, f, None, st)
        a = solve_adjoint("discrete", m, s, cp, st)
        b = solve_adjoint("paper", m, s, cp, st)
        num = math.hypot(l2_norm(a.e1 - b.e1), l2_norm(a.p1 - b.p1))
        den = math.hypot(l2_norm(a.e1), l2_norm(a.p1))
        gaps.append(num / den if den > 0 else 0.0)
    rep.errors["relative_gap"] = gaps
    rep.observed_orders["relative_gap"] = [observed_order(a, b, n2 / n1) for a, b, n1, n2
                                           in zip(gaps, gaps[1:], grids, grids[1:])]
    for i, (a, b) in enumerate(zip(gaps, gaps[1:])):
        ratio = a / b if b > 0 else math.inf
        rep.check(f"gap_ratio[{grids[i]}->{grids[i + 1]}]", ratio, ">=", REFINE_RATIO_MIN)
    return rep


DEFAULT_CASES = ("mms_pressure", "mms_coupled", "taylor_delta_f", "gradient_check",
                 "adjoint_consistency")


def run_case(name: str, seed: int = DEFAULT_SEED, st: SolverSettings = SolverSettings()) -> VerificationReport:
    if name == "mms_pressure":
        return mms_pressure(st=st)
    if name == "mms_coupled":
        return mms_coupled(st=st)
    if name == "taylor_delta_f":
        return taylor_delta_f(seed=seed)
    if name == "gradient_check":
        return gradient_check(seed=seed, st=st)
    if name == "adjoint_consistency":
        return adjoint_consistency(st=st)
    raise InvalidArgumentError(f"unknown verification case {name!r}; choose from {DEFAULT_CASES}")
