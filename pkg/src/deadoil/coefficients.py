"""Coefficient models ``(phi, g, d)`` with the derivatives the solver needs.

Every callable is vectorized over numpy arrays. Bound constants are declared
per model and only claimed on ``[-M, M]`` (the validity interval); the check in
:func:`validate_bounds` is advisory and never raises.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial

from .errors import InvalidArgumentError, NonConvergenceError

Fn = Callable[[np.ndarray], np.ndarray]

BUILTIN_NAMES = ("smooth_bounded", "verification_constant", "verification_linear_phi")


@dataclass(frozen=True)
class CoefficientModel:
    name: str
    phi: Fn
    dphi: Fn
    d2phi: Fn
    d3phi: Fn
    gfun: Fn
    dg: Fn
    d2g: Fn
    dfun: Fn
    dd: Fn
    c1: float
    c2: float
    c3: float
    c4: float
    c_h3: float
    validity_interval: tuple = (-2.0, 2.0)

    def invert_phi(self, z, guess=None, tol=1e-15, maxit=100):
        """Solve ``phi(u) = z`` nodewise by safeguarded Newton.

        Requires ``phi`` to be strictly increasing along the iterates.
        """
        z = np.asarray(z, dtype=float)
        u = np.zeros_like(z) if guess is None else np.array(guess, dtype=float)
        res = self.phi(u) - z
        scale = 1.0 + np.abs(z)
        for _ in range(maxit):
            if np.all(np.abs(res) <= tol * scale):
                return u
            slope = self.dphi(u)
            if np.any(slope <= 0):
                raise NonConvergenceError(f"phi is not increasing near u={u[slope <= 0][0]:.3g}")
            step = res / slope
            t = np.ones_like(u)
            for _ in range(30):
                trial = u - t * step
                new_res = self.phi(trial) - z
                bad = np.abs(new_res) > np.abs(res) * (1 - 1e-4 * t) + tol * scale
                if not bad.any():
                    break
                t = np.where(bad, 0.5 * t, t)
            u, res = trial, new_res
        if np.all(np.abs(res) <= 1e3 * tol * scale):
            return u
        raise NonConvergenceError("phi inversion did not converge",
                                  residual=float(np.abs(res).max()))


def _logcosh(r):
    r = np.asarray(r, dtype=float)
    return np.logaddexp(r, -r) - np.log(2.0)


def _sech2(r):
    return 1.0 / np.cosh(np.clip(r, -350, 350)) ** 2


def _const(c):
    return lambda r: np.full(np.shape(r), float(c))


def _smooth_bounded():
    return CoefficientModel(
        name="smooth_bounded",
        phi=lambda r: 2.0 + np.asarray(r) + 0.2 * _logcosh(r),
        dphi=lambda r: 1.0 + 0.2 * np.tanh(r),
        d2phi=lambda r: 0.2 * _sech2(r),
        d3phi=lambda r: -0.4 * _sech2(r) * np.tanh(r),
        gfun=lambda r: 1.0 + 0.25 * np.tanh(r),
        dg=lambda r: 0.25 * _sech2(r),
        d2g=lambda r: -0.5 * _sech2(r) * np.tanh(r),
        dfun=lambda r: 1.0 + 0.5 * np.tanh(r),
        dd=lambda r: 0.5 * _sech2(r),
        # analytic extrema on [-2, 2], rounded outward
        c1=0.26, c2=4.3, c3=0.014, c4=1.2, c_h3=0.16,
        validity_interval=(-2.0, 2.0),
    )


def _verification(name, g_value):
    return CoefficientModel(
        name=name,
        phi=lambda r: np.array(r, dtype=float),
        dphi=_const(1.0), d2phi=_const(0.0), d3phi=_const(0.0),
        gfun=_const(g_value), dg=_const(0.0), d2g=_const(0.0),
        dfun=_const(1.0), dd=_const(0.0),
        c1=1.0, c2=2.0, c3=1.0, c4=1.0, c_h3=0.0,
        validity_interval=(-2.0, 2.0),
    )


def builtin_model(name: str) -> CoefficientModel:
    """Return one of the named models.

    ``smooth_bounded`` satisfies the positivity and derivative bounds on
    ``[-2, 2]``. The two ``verification_*`` models have ``phi(r) = r`` and
    ``d = 1`` (with ``g = 0`` or ``g = 1``); they deliberately violate the
    bounds and exist for closed-form checks.
    """
    if name == "smooth_bounded":
        return _smooth_bounded()
    if name == "verification_constant":
        return _verification(name, 0.0)
    if name == "verification_linear_phi":
        return _verification(name, 1.0)
    raise InvalidArgumentError(f"unknown model {name!r}; choose from {', '.join(BUILTIN_NAMES)}")


def _poly_fns(coefs, nder):
    p = Polynomial(np.asarray(coefs, dtype=float))
    return [p.deriv(k) if k else p for k in range(nder + 1)]


def polynomial_model(phi, g, d, validity=2.0, constants=None, name="polynomial") -> CoefficientModel:
    """Model from ascending polynomial coefficient lists (degree <= 6).

    Missing bound constants are taken as the sampled extrema on the validity
    interval, so they describe the model rather than constrain it.
    """
    for label, c in (("phi", phi), ("g", g), ("d", d)):
        if not 1 <= len(c) <= 7:
            raise InvalidArgumentError(f"{label}: need 1..7 coefficients (degree <= 6), got {len(c)}")
    if not validity > 0:
        raise InvalidArgumentError("validity half-width must be positive")
    P = _poly_fns(phi, 3)
    G = _poly_fns(g, 2)
    D = _poly_fns(d, 1)
    r = np.linspace(-validity, validity, 10001)
    sampled = dict(
        c1=min(D[0](r).min(), G[0](r).min(), P[0](r).min()),
        c2=max(D[0](r).max(), G[0](r).max(), P[0](r).max()),
        c3=min(D[1](r).min(), P[1](r).min(), P[2](r).min()),
        c4=max(D[1](r).max(), P[1](r).max(), P[2](r).max()),
        c_h3=np.abs(P[3](r)).max(),
    )
    sampled.update(constants or {})
    return CoefficientModel(
        name=name,
        phi=P[0], dphi=P[1], d2phi=P[2], d3phi=P[3],
        gfun=G[0], dg=G[1], d2g=G[2],
        dfun=D[0], dd=D[1],
        validity_interval=(-float(validity), float(validity)),
        **{k: float(v) for k, v in sampled.items()},
    )


@dataclass
class BoundRow:
    quantity: str
    relation: str
    bound: float
    observed: float
    passed: bool


@dataclass
class ValidationReport:
    model: str
    interval: tuple
    samples: int
    rows: list = field(default_factory=list)
    derivative_rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows) and all(r.passed for r in self.derivative_rows)

    def row(self, quantity, relation):
        for r in self.rows:
            if r.quantity == quantity and r.relation == relation:
                return r
        raise KeyError((quantity, relation))

    def failures(self):
        return [r for r in self.rows + self.derivative_rows if not r.passed]


DERIVATIVE_TOL = 1e-6


def derivative_mismatch(fn, dfn, r, h=1e-5, fourth_order=False):
    """Sup-norm relative gap between ``dfn`` and a central difference of ``fn``."""
    r = np.asarray(r, dtype=float)
    if fourth_order:
        fd = (-fn(r + 2 * h) + 8 * fn(r + h) - 8 * fn(r - h) + fn(r - 2 * h)) / (12 * h)
    else:
        fd = (fn(r + h) - fn(r - h)) / (2 * h)
    an = dfn(r)
    gap = np.abs(fd - an).max()
    ref = np.abs(an).max()
    if gap == 0.0:
        return 0.0
    return float(gap / ref) if ref > 0 else float("inf")


def validate_bounds(m: CoefficientModel, samples: int = 10_000) -> ValidationReport:
    """Sample the validity interval and test the declared bounds.

    Rows cover ``c1 <= d, g, phi <= c2``, ``c3 <= d', phi', phi'' <= c4`` and
    ``|phi'''| <= c_h3``; derivative rows compare each supplied derivative to a
    central difference of its primitive.
    """
    if samples < 2:
        raise InvalidArgumentError("need at least 2 samples")
    lo, hi = m.validity_interval
    r = np.linspace(lo, hi, samples)
    rep = ValidationReport(m.name, (lo, hi), samples)
    for q, fn in (("d", m.dfun), ("g", m.gfun), ("phi", m.phi)):
        v = fn(r)
        rep.rows.append(BoundRow(q, ">= c1", m.c1, float(v.min()), bool(v.min() >= m.c1)))
        rep.rows.append(BoundRow(q, "<= c2", m.c2, float(v.max()), bool(v.max() <= m.c2)))
    for q, fn in (("dd", m.dd), ("dphi", m.dphi), ("d2phi", m.d2phi)):
        v = fn(r)
        rep.rows.append(BoundRow(q, ">= c3", m.c3, float(v.min()), bool(v.min() >= m.c3)))
        rep.rows.append(BoundRow(q, "<= c4", m.c4, float(v.max()), bool(v.max() <= m.c4)))
    a3 = np.abs(m.d3phi(r)).max()
    rep.rows.append(BoundRow("|d3phi|", "<= c_h3", m.c_h3, float(a3), bool(a3 <= m.c_h3)))
    for q, fn, dfn in (("dphi", m.phi, m.dphi), ("d2phi", m.dphi, m.d2phi),
                       ("d3phi", m.d2phi, m.d3phi), ("dg", m.gfun, m.dg),
                       ("d2g", m.dg, m.d2g), ("dd", m.dfun, m.dd)):
        err = derivative_mismatch(fn, dfn, r)
        rep.derivative_rows.append(
            BoundRow(q, "fd-consistent", DERIVATIVE_TOL, err, bool(err <= DERIVATIVE_TOL)))
    return rep
