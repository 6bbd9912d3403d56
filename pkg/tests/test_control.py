import numpy as np
import pytest

from deadoil.coefficients import builtin_model
from deadoil.control import (
    AdjointSolution,
    ControlProblem,
    OptimizeOptions,
    eval_cost,
    evaluate,
    optimize,
    reduced_cost,
    reduced_gradient,
    solve_adjoint,
)
from deadoil.errors import InvalidArgumentError
from deadoil.grid import Field, create_grid, inner_product, l2_norm, lp_power_norm
from deadoil.linalg import solve_cg
from deadoil.operators import StateSolution, laplacian
from deadoil.state import solve_state_newton

from conftest import bump


def zero_problem(g, **kw):
    return ControlProblem(Field.zeros(g), Field.zeros(g), **kw)


def manufactured(g, m, beta1, amplitude=20.0):
    f_star = Field.from_function(g, bump(amplitude=amplitude))
    s, _ = solve_state_newton(m, f_star)
    return ControlProblem(s.u, s.p, beta1=beta1, q0=1.5)


@pytest.mark.parametrize("kw", [{"q0": 1.0}, {"q0": 2.0}, {"beta1": 0.0}, {"eps_smooth": -1.0}])
def test_problem_validation(unit3, kw):
    with pytest.raises(InvalidArgumentError):
        zero_problem(unit3, **kw)


def test_problem_rejects_nonfinite_target(unit3):
    bad = Field(unit3, [np.inf] + [0.0] * 8)
    with pytest.raises(InvalidArgumentError):
        ControlProblem(bad, Field.zeros(unit3))


def test_cost_vanishes_on_target(unit3, rng):
    U = Field(unit3, rng.normal(size=9))
    P = Field(unit3, rng.normal(size=9))
    cp = ControlProblem(U, P)
    assert eval_cost(cp, StateSolution(U, P), Field.zeros(unit3)) == 0.0


def test_cost_tracking_example(unit3):
    cp = zero_problem(unit3)
    s = StateSolution(Field.constant(unit3, 1.0), Field.zeros(unit3))
    assert eval_cost(cp, s, Field.zeros(unit3)) == pytest.approx(0.28125, abs=1e-15)


def test_cost_penalty_example(unit3):
    cp = zero_problem(unit3, beta1=0.1, q0=1.5, eps_smooth=0.0)
    J = eval_cost(cp, StateSolution.zeros(unit3), Field.constant(unit3, 1.0))
    assert J == pytest.approx(0.05625, abs=1e-15)


def test_cost_penalty_is_power_norm(rng):
    g = create_grid(6, 5)
    cp = zero_problem(g, beta1=0.3, q0=1.3, eps_smooth=0.0)
    f = Field(g, rng.normal(size=g.size))
    J = eval_cost(cp, StateSolution.zeros(g), f)
    assert J == pytest.approx(0.3 * lp_power_norm(f, 2.6), rel=1e-14)


def test_smoothing_invisible_away_from_zero(rng):
    g = create_grid(8, 8)
    f = Field(g, rng.choice([-1, 1], g.size) * rng.uniform(1.5e-2, 2.0, g.size))
    exact = eval_cost(zero_problem(g, eps_smooth=0.0), StateSolution.zeros(g), f)
    smooth = eval_cost(zero_problem(g, eps_smooth=1e-8), StateSolution.zeros(g), f)
    assert abs(exact - smooth) <= 1e-12 * exact


def test_smoothing_gap_bound_near_threshold(rng):
    # relative gap is about q0 * eps^2 / f^2 per node, i.e. 1.5e-10 at |f| = 1e-3
    g = create_grid(8, 8)
    q0, eps = 1.5, 1e-8
    f = Field(g, rng.choice([-1, 1], g.size) * rng.uniform(1e-3, 1e-2, g.size))
    exact = eval_cost(zero_problem(g, q0=q0, eps_smooth=0.0), StateSolution.zeros(g), f)
    smooth = eval_cost(zero_problem(g, q0=q0, eps_smooth=eps), StateSolution.zeros(g), f)
    bound = q0 * eps ** 2 / np.min(np.abs(f.values)) ** 2
    assert 0 <= (smooth - exact) / exact <= 1.01 * bound


def test_adjoint_zero_rhs(smooth, rng):
    g = create_grid(7, 7)
    s, _ = solve_state_newton(smooth, Field(g, rng.normal(size=g.size)))
    cp = ControlProblem(s.u, s.p)
    for mode in ("paper", "discrete"):
        adj = solve_adjoint(mode, smooth, s, cp)
        assert not adj.e1.values.any() and not adj.p1.values.any()


@pytest.mark.parametrize("mode", ["paper", "discrete"])
def test_adjoint_poisson_oracle(mode):
    m = builtin_model("verification_constant")
    g = create_grid(9, 9)
    P = Field.from_function(g, lambda x, y: np.sin(np.pi * x) * np.sin(2 * np.pi * y))
    cp = ControlProblem(Field.zeros(g), P)
    adj = solve_adjoint(mode, m, StateSolution.zeros(g), cp)
    expected = solve_cg(laplacian(g), P.values, tol=1e-14)
    np.testing.assert_allclose(adj.p1.values, expected, rtol=0, atol=1e-10 * np.abs(expected).max())
    assert np.abs(adj.e1.values).max() <= 1e-14


def test_adjoint_unknown_mode(unit3):
    with pytest.raises(InvalidArgumentError):
        solve_adjoint("continuous", builtin_model("verification_constant"),
                      StateSolution.zeros(unit3), zero_problem(unit3))


def test_adjoint_modes_converge_under_refinement(smooth):
    gaps = []
    for n in (8, 16, 32):
        g = create_grid(n - 1, n - 1)
        s, _ = solve_state_newton(smooth, Field.from_function(g, bump()))
        cp = ControlProblem(Field.from_function(g, lambda x, y: 0.3 * np.sin(np.pi * x) * np.sin(np.pi * y)),
                            Field.zeros(g))
        a = solve_adjoint("discrete", smooth, s, cp)
        b = solve_adjoint("paper", smooth, s, cp)
        num = np.hypot(l2_norm(a.e1 - b.e1), l2_norm(a.p1 - b.p1))
        gaps.append(num / np.hypot(l2_norm(a.e1), l2_norm(a.p1)))
    orders = [np.log2(x / y) for x, y in zip(gaps, gaps[1:])]
    assert min(orders) >= 0.9


def test_gradient_examples(unit3):
    cp = zero_problem(unit3, beta1=0.1, q0=1.5, eps_smooth=0.0)
    f = Field.constant(unit3, 1.0)
    zero = Field.zeros(unit3)
    g = reduced_gradient(cp, f, AdjointSolution(zero, zero))
    np.testing.assert_allclose(g.values, 0.3, rtol=1e-15)
    g = reduced_gradient(cp, f, AdjointSolution(zero, Field.constant(unit3, 0.3)))
    assert np.abs(g.values).max() <= 1e-15


def test_gradient_smoothed_matches_exact_away_from_zero(unit3, rng):
    f = Field(unit3, rng.uniform(0.5, 2.0, 9))
    zero = Field.zeros(unit3)
    a = reduced_gradient(zero_problem(unit3, eps_smooth=0.0), f, AdjointSolution(zero, zero))
    b = reduced_gradient(zero_problem(unit3, eps_smooth=1e-8), f, AdjointSolution(zero, zero))
    np.testing.assert_allclose(a.values, b.values, rtol=1e-14)


@pytest.mark.parametrize("n", [8, 16])
def test_discrete_gradient_matches_finite_differences(smooth, rng, n):
    g = create_grid(n - 1, n - 1)
    cp = ControlProblem(Field.from_function(g, lambda x, y: 0.3 * np.sin(np.pi * x) * np.sin(np.pi * y)),
                        Field.from_function(g, lambda x, y: 0.2 * np.sin(np.pi * x) * np.sin(2 * np.pi * y)),
                        beta1=0.1, q0=1.5)
    f = Field.from_function(g, bump()) + Field(g, rng.normal(size=g.size))
    ev = evaluate(cp, smooth, f)
    for _ in range(3):
        d = Field(g, rng.normal(size=g.size))
        gd = inner_product(ev.gradient, d)
        errs = []
        for s in (1e-2, 1e-3, 1e-4, 1e-5):
            fd = (reduced_cost(cp, smooth, f + s * d)[0] - reduced_cost(cp, smooth, f - s * d)[0]) / (2 * s)
            errs.append(abs(fd - gd) / abs(gd))
        assert min(errs) <= 1e-6


def test_optimize_stationary_start(smooth):
    g = create_grid(7, 7)
    f0 = Field.zeros(g)
    res = optimize(zero_problem(g), smooth, f0)
    assert res.iterations == 0 and res.converged
    assert res.f is f0
    assert len(res.history) == 1


def test_optimize_max_outer_zero(smooth):
    g = create_grid(7, 7)
    cp = manufactured(g, smooth, 1e-3)
    res = optimize(cp, smooth, Field.zeros(g), opt=OptimizeOptions(max_outer=0))
    assert res.iterations == 0 and not res.converged


def test_options_validation():
    with pytest.raises(InvalidArgumentError):
        OptimizeOptions(max_outer=-1)
    with pytest.raises(InvalidArgumentError):
        OptimizeOptions(step0=0.0)


@pytest.fixture(scope="module")
def inverse_run():
    m = builtin_model("smooth_bounded")
    g = create_grid(15, 15)
    cp = manufactured(g, m, 1e-3)
    return cp, m, optimize(cp, m, Field.zeros(g), opt=OptimizeOptions(tol_stationarity=1e-3))


def test_inverse_problem_descent(inverse_run):
    _, _, res = inverse_run
    J = [h["J"] for h in res.history]
    assert all(b < a for a, b in zip(J, J[1:]))
    assert res.converged
    assert res.stationarity_norm <= 1e-2 * res.history[0]["stationarity_norm"]
    assert set(res.history[0]) == {"iter", "J", "stationarity_norm", "step"}


def test_zero_residual_certificate(inverse_run):
    cp, m, res = inverse_run
    adj = solve_adjoint("discrete", m, res.state, cp)
    again = l2_norm(reduced_gradient(cp, res.f, adj))
    assert abs(again - res.stationarity_norm) <= 1e-12 * max(res.stationarity_norm, 1e-300) + 1e-12


@pytest.mark.slow
def test_penalty_monotone_in_beta1(smooth):
    g = create_grid(11, 11)
    base = manufactured(g, smooth, 1e-3)
    norms = []
    for beta1 in (1e-3, 1e-2, 1e-1):
        cp = ControlProblem(base.U, base.P, beta1=beta1, q0=1.5)
        res = optimize(cp, smooth, Field.zeros(g), opt=OptimizeOptions(tol_stationarity=1e-6))
        norms.append(lp_power_norm(res.f, 3.0))
    assert norms[0] >= norms[1] >= norms[2]
