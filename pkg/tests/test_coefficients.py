import dataclasses

import numpy as np
import pytest

from deadoil.coefficients import (
    BUILTIN_NAMES,
    builtin_model,
    derivative_mismatch,
    polynomial_model,
    validate_bounds,
)
from deadoil.errors import InvalidArgumentError


def test_smooth_bounded_at_zero(smooth):
    assert smooth.dfun(np.array(0.0)) == 1.0
    assert smooth.dd(np.array(0.0)) == 0.5


def test_verification_constant_g_vanishes():
    m = builtin_model("verification_constant")
    assert m.gfun(np.array(17.3)) == 0.0
    assert m.phi(np.array(17.3)) == 17.3


def test_unknown_model():
    with pytest.raises(InvalidArgumentError):
        builtin_model("brooks_corey")


def test_smooth_bounded_passes_all_rows(smooth):
    rep = validate_bounds(smooth, 10_000)
    assert rep.passed, rep.failures()
    # observed extrema come from the sampling, the declared constants bracket them
    r = np.linspace(-2, 2, 10_000)
    c1_obs = min(smooth.dfun(r).min(), smooth.gfun(r).min(), smooth.phi(r).min())
    assert min(rep.row(q, ">= c1").observed for q in ("d", "g", "phi")) == pytest.approx(c1_obs, rel=1e-15)
    assert smooth.c1 <= c1_obs


def test_verification_constant_fails_expected_rows():
    rep = validate_bounds(builtin_model("verification_constant"), 1000)
    assert not rep.row("g", ">= c1").passed
    assert not rep.row("d2phi", ">= c3").passed
    assert rep.row("d", ">= c1").passed
    assert not rep.passed


def test_forced_derivative_mismatch_detected(smooth):
    bad = dataclasses.replace(smooth, dphi=lambda r: smooth.dphi(r) + 0.1)
    rep = validate_bounds(bad, 500)
    row = next(r for r in rep.derivative_rows if r.quantity == "dphi")
    assert not row.passed
    assert all(r.passed for r in validate_bounds(smooth, 500).derivative_rows)


def test_validate_bounds_deterministic(smooth):
    a, b = validate_bounds(smooth, 777), validate_bounds(smooth, 777)
    assert a == b


def test_validate_bounds_needs_two_samples(smooth):
    with pytest.raises(InvalidArgumentError):
        validate_bounds(smooth, 1)


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_builtin_derivatives_fourth_order(name, rng):
    m = builtin_model(name)
    r = rng.uniform(*m.validity_interval, size=100)
    for fn, dfn in ((m.phi, m.dphi), (m.dphi, m.d2phi), (m.d2phi, m.d3phi),
                    (m.gfun, m.dg), (m.dg, m.d2g), (m.dfun, m.dd)):
        assert derivative_mismatch(fn, dfn, r, h=1e-3, fourth_order=True) <= 1e-8


def test_polynomial_model_derivatives():
    m = polynomial_model(phi=[0, 1, 0.1], g=[1, 0.2], d=[1, 0.3, 0.0, 0.01], validity=1.5)
    r = np.array([-1.0, 0.5])
    np.testing.assert_allclose(m.phi(r), r + 0.1 * r ** 2)
    np.testing.assert_allclose(m.d2phi(r), [0.2, 0.2])
    np.testing.assert_allclose(m.d3phi(r), [0.0, 0.0])
    np.testing.assert_allclose(m.dd(r), 0.3 + 0.03 * r ** 2)
    assert m.validity_interval == (-1.5, 1.5)
    # constants default to the sampled extrema, so the model describes itself
    assert validate_bounds(m, 10001).passed


def test_polynomial_degree_cap():
    with pytest.raises(InvalidArgumentError):
        polynomial_model(phi=[0] * 8, g=[1], d=[1])


def test_invert_phi(smooth, rng):
    u = rng.uniform(-2, 2, 50)
    np.testing.assert_allclose(smooth.invert_phi(smooth.phi(u)), u, atol=1e-13)
    # exact at the origin
    zero = np.zeros(3)
    assert np.array_equal(smooth.invert_phi(smooth.phi(zero)), zero)
