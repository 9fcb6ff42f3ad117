"""Multiplicative Grassmannian flow engine.

A pair of scalar linear equations per frequency,

    d/dt p = (p_const(s) + p_coeff(s, t)) p + q_coeff(s, t) q,
    d/dt q = q_source(s, t) p,

is solved either in closed form (triangular case ``q_coeff = 0``, nested
time quadrature) or by classical RK4, and projected onto g = p / (1 + q) or
g = p / q.  The projected g then solves a scalar Riccati equation.
"""

import enum
from dataclasses import dataclass

import numpy as np

from ._quadrature import cumulative_integral, exponential_simpson
from .errors import InvalidInputError

DENOM_FLOOR = 1e-12


class Normalization(enum.Enum):
    ONE_PLUS_Q = "one_plus_q"
    PLAIN_Q = "plain_q"


@dataclass(frozen=True)
class LinearCoefficients:
    """Coefficient callables of the linear (q, p) system.

    ``p_coeff(s, t)`` and ``q_source(s, t)`` are evaluated with broadcasting
    arrays (s as a column, t as a row).  ``p_const(s)`` is an optional
    time-independent part of the p coefficient; it is integrated exactly,
    which keeps the time quadrature accurate when it is large or oscillatory.
    ``q_coeff`` couples q back into p and is only supported by
    :func:`evolve_coupled`.
    """

    p_coeff: object
    q_source: object
    q_coeff: object = None
    p_const: object = None


@dataclass(frozen=True)
class GrassmannState:
    s_grid: np.ndarray
    q_hat: np.ndarray
    p_hat: np.ndarray
    g_hat: np.ndarray
    valid: np.ndarray
    normalization: Normalization = Normalization.ONE_PLUS_Q

    @property
    def denominator(self):
        if self.normalization is Normalization.ONE_PLUS_Q:
            return 1.0 + self.q_hat
        return self.q_hat

    def consistency_error(self):
        """Largest relative defect of g * denominator = p over valid points."""
        if not np.any(self.valid):
            return 0.0
        lhs = self.g_hat[self.valid] * self.denominator[self.valid]
        rhs = self.p_hat[self.valid]
        scale = np.maximum(np.abs(rhs), np.abs(lhs))
        scale[scale == 0] = 1.0
        return float(np.max(np.abs(lhs - rhs) / scale))


def _project(s, q, p, normalization, denom_floor):
    denom = 1.0 + q if normalization is Normalization.ONE_PLUS_Q else q
    valid = np.abs(denom) > denom_floor
    g = np.full(p.shape, np.nan + 0j)
    g[valid] = p[valid] / denom[valid]
    return GrassmannState(s, q, p, g, valid, normalization)


def _as_grid(s_grid):
    return np.atleast_1d(np.asarray(s_grid, dtype=complex))


def _eval(fn, s_col, t_row):
    out = np.asarray(fn(s_col, t_row), dtype=complex)
    return np.broadcast_to(out, np.broadcast_shapes(s_col.shape, t_row.shape))


def evolve_closed_form(
    coeffs,
    g0_hat,
    s_grid,
    t,
    time_quadrature_n=256,
    *,
    normalization=Normalization.ONE_PLUS_Q,
    denom_floor=DENOM_FLOOR,
    chunk=4096,
):
    """Closed-form solution of the triangular system at time ``t``.

    p(t) = exp(int_0^t p_coeff + t p_const) g0 and
    q(t) = q(0) + int_0^t q_source p dtau, with q(0) = 0 for ONE_PLUS_Q and
    q(0) = 1 for PLAIN_Q.  Time integrals use ``time_quadrature_n`` panels:
    a fourth-order running integral for the exponent and Simpson's rule
    (exponentially fitted to p_const) for q.
    """
    if coeffs.q_coeff is not None:
        raise InvalidInputError("closed form requires a triangular system (q_coeff = None)")
    if t < 0:
        raise InvalidInputError("closed form is evaluated at t >= 0")
    s = _as_grid(s_grid)
    g0 = np.broadcast_to(np.asarray(g0_hat(s), dtype=complex), s.shape)
    q_start = 0.0 if normalization is Normalization.ONE_PLUS_Q else 1.0
    if t == 0:
        q = np.full(s.shape, q_start, dtype=complex)
        return _project(s, q, g0.copy(), normalization, denom_floor)
    n = int(time_quadrature_n)
    if n < 2 or n % 2:
        raise InvalidInputError("time_quadrature_n must be an even integer >= 2")
    h = t / n
    tau = np.linspace(0.0, t, n + 1)[None, :]
    p_out = np.empty(s.shape, dtype=complex)
    q_out = np.empty(s.shape, dtype=complex)
    for lo in range(0, s.size, chunk):
        sc = s[lo : lo + chunk, None]
        exponent = cumulative_integral(_eval(coeffs.p_coeff, sc, tau), h)
        mu = (
            np.asarray(coeffs.p_const(sc[:, 0]), dtype=complex)
            if coeffs.p_const is not None
            else np.zeros(sc.shape[0], dtype=complex)
        )
        mu = np.broadcast_to(mu, (sc.shape[0],))
        smooth = np.exp(exponent) * g0[lo : lo + chunk, None]
        p_out[lo : lo + chunk] = np.exp(mu * t) * smooth[:, -1]
        source = _eval(coeffs.q_source, sc, tau)
        q_out[lo : lo + chunk] = q_start + exponential_simpson(source * smooth, h, mu)
    return _project(s, q_out, p_out, normalization, denom_floor)


def evolve_coupled(
    coeffs,
    q0,
    p0,
    s_grid,
    t,
    n_steps,
    *,
    t0=0.0,
    normalization=Normalization.PLAIN_Q,
    denom_floor=DENOM_FLOOR,
):
    """Integrate the full 2x2 system per frequency with classical RK4 from t0 to t."""
    if n_steps < 1:
        raise InvalidInputError("n_steps must be >= 1")
    s = _as_grid(s_grid)[:, None]
    q = np.broadcast_to(np.asarray(q0, dtype=complex), s.shape[:1]).copy()
    p = np.broadcast_to(np.asarray(p0, dtype=complex), s.shape[:1]).copy()
    zero = lambda s_, t_: 0.0  # noqa: E731
    q_coeff = coeffs.q_coeff or zero
    p_const = coeffs.p_const

    def rhs(tt, qq, pp):
        tt = np.array([[tt]])
        a = _eval(coeffs.p_coeff, s, tt)[:, 0]
        if p_const is not None:
            a = a + np.asarray(p_const(s[:, 0]), dtype=complex)
        c = _eval(q_coeff, s, tt)[:, 0]
        b = _eval(coeffs.q_source, s, tt)[:, 0]
        return b * pp, a * pp + c * qq

    dt = (t - t0) / n_steps
    tt = t0
    for _ in range(n_steps):
        k1 = rhs(tt, q, p)
        k2 = rhs(tt + dt / 2, q + dt / 2 * k1[0], p + dt / 2 * k1[1])
        k3 = rhs(tt + dt / 2, q + dt / 2 * k2[0], p + dt / 2 * k2[1])
        k4 = rhs(tt + dt, q + dt * k3[0], p + dt * k3[1])
        q = q + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        p = p + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        tt = t0 + (_ + 1) * dt
    return _project(s[:, 0], q, p, normalization, denom_floor)


@dataclass(frozen=True)
class MonitorReport:
    abs_q: np.ndarray
    min_abs_one_plus_q: float
    series_regime: bool
    failing: np.ndarray

    @property
    def ok(self):
        return self.failing.size == 0


def reciprocal_monitor(state, denom_floor=DENOM_FLOOR):
    """Check the reciprocal-existence conditions |q| < 1 and 1 + q != 0."""
    if state.normalization is not Normalization.ONE_PLUS_Q:
        raise InvalidInputError("reciprocal monitor applies to the 1 + q normalisation")
    abs_q = np.abs(state.q_hat)
    one_plus = np.abs(1.0 + state.q_hat)
    failing = np.nonzero(one_plus <= denom_floor)[0]
    return MonitorReport(
        abs_q=abs_q,
        min_abs_one_plus_q=float(np.min(one_plus)),
        series_regime=bool(np.all(abs_q < 1.0)),
        failing=failing,
    )


def riccati_residual(g_hat_fn, rhs, s, t, dt=1e-4):
    """Centred-difference d/dt g(s, t) minus rhs(s, g(s, t), t)."""
    g_plus = g_hat_fn(s, t + dt)
    g_minus = g_hat_fn(s, t - dt)
    g_mid = g_hat_fn(s, t)
    return (np.asarray(g_plus) - np.asarray(g_minus)) / (2.0 * dt) - rhs(s, g_mid, t)
