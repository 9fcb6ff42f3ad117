"""Example models that sit just outside the general Smoluchowski class.

Coarsening (tanh solution and its coupled (q, p) system), a depinning model
(exponential ansatz ODE and the perturbation in transform space), multiple
mergers through a branching mechanism, a Strang splitting for a transport
plus coagulation model, and the Cole-Hopf solution of a viscous Burgers
equation in the transform variable.
"""

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from ._quadrature import cumulative_integral, exponential_simpson
from .errors import (
    BlowUpError,
    DomainError,
    InvalidInputError,
    InvariantError,
    PoleError,
    SingularityError,
    TruncationWarning,
)
from .grassmann import LinearCoefficients, Normalization, evolve_closed_form, evolve_coupled
from .smoluchowski import trapezoid_convolution

TAIL_THRESHOLD = 1e-10


# ---------------------------------------------------------------- coarsening


@dataclass(frozen=True)
class CoarseningInput:
    """Diagonal trace h(tau) = g(tau; tau), data transform at t = 1, truncation."""

    h: object
    g1_hat: object = None
    tau_max: float = 50.0
    n_panels: int = 2048

    def __post_init__(self):
        if not self.tau_max > 1.0:
            raise InvalidInputError("tau_max must exceed the initial time 1")
        if self.n_panels < 2 or self.n_panels % 2:
            raise InvalidInputError("n_panels must be an even integer >= 2")
        probe = np.asarray(self.h(np.linspace(1.0, self.tau_max, 257)), dtype=float)
        if np.any(probe < 0):
            raise InvalidInputError("h must be non-negative")
        if abs(float(self.h(self.tau_max))) > TAIL_THRESHOLD:
            warnings.warn("h(tau_max) above the tail threshold; integral truncated", TruncationWarning, stacklevel=3)


def _trace_integral(inp, s, t_lo, t_hi):
    """int_{t_lo}^{t_hi} h(tau) exp(-s tau) dtau, Filon-Simpson in tau."""
    s = np.asarray(s, dtype=complex)
    if t_hi == t_lo:
        return np.zeros(s.shape, dtype=complex)
    length = t_hi - t_lo
    n = inp.n_panels
    step = length / n
    u = np.linspace(0.0, length, n + 1)
    samples = np.asarray(inp.h(t_lo + u), dtype=float)
    flat = s.reshape(-1)
    out = np.exp(-flat * t_lo) * exponential_simpson(samples[None, :], step, -flat)
    return out.reshape(s.shape)


def coarsening_g1_hat(inp, s):
    """Self-consistent data transform tanh int_1^tau_max h e^{-s tau}."""
    if inp.g1_hat is not None:
        return np.asarray(inp.g1_hat(np.asarray(s, dtype=complex)), dtype=complex)
    return np.tanh(_trace_integral(inp, s, 1.0, inp.tau_max))


def coarsening_ghat(inp, s, t):
    """tanh(int_t^tau_max h(tau) e^{-s tau} dtau) for 1 <= t <= tau_max."""
    if t < 1.0:
        raise DomainError("the coarsening model starts at t = 1")
    if t > inp.tau_max:
        raise DomainError("t beyond tau_max")
    out = np.tanh(_trace_integral(inp, s, t, inp.tau_max))
    return out[()] if out.ndim else complex(out)


@dataclass(frozen=True)
class CoarseningState:
    G: np.ndarray
    g1_hat: np.ndarray
    q_hat: np.ndarray
    p_hat: np.ndarray

    @property
    def g_hat(self):
        return self.p_hat / self.q_hat


def coarsening_state(inp, s, t):
    """Closed forms q = cosh G + g1 sinh G, p = sinh G + g1 cosh G with G = -int_1^t h e^{-s tau}."""
    if t < 1.0:
        raise DomainError("the coarsening model starts at t = 1")
    G = -_trace_integral(inp, s, 1.0, t)
    g1 = coarsening_g1_hat(inp, s)
    return CoarseningState(G, g1, np.cosh(G) + g1 * np.sinh(G), np.sinh(G) + g1 * np.cosh(G))


def coarsening_coefficients(inp):
    """Coupled system coefficients b = c = -h(t) e^{-s t} (no p self-coupling)."""

    def coupling(s, tau):
        return -np.asarray(inp.h(tau), dtype=float) * np.exp(-s * tau)

    return LinearCoefficients(p_coeff=lambda s, tau: 0.0, q_source=coupling, q_coeff=coupling)


def coarsening_coupled(inp, s, t, n_steps=2000):
    """RK4 integration of the coupled (q, p) system from q = 1, p = g1 at t = 1."""
    if t < 1.0:
        raise DomainError("the coarsening model starts at t = 1")
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    g1 = coarsening_g1_hat(inp, s)
    if t == 1.0:
        state = CoarseningState(np.zeros_like(s), g1, np.ones_like(s), g1.copy())
        return state
    res = evolve_coupled(coarsening_coefficients(inp), np.ones_like(s), g1, s, t, n_steps, t0=1.0)
    return CoarseningState(None, g1, res.q_hat, res.p_hat)


def coarsening_riccati_rhs(inp):
    """Right-hand side h(t) e^{-s t} (g^2 - 1)."""
    return lambda s, g, t: float(inp.h(t)) * np.exp(-s * t) * (g * g - 1.0)


# ---------------------------------------------------------------- depinning


class DepinningPhase(enum.Enum):
    UNPINNED = "unpinned"
    CRITICAL = "critical"
    PINNED = "pinned"


@dataclass(frozen=True)
class DepinningParams:
    """Exponential-ansatz parameters; the phase is the sign of 2 R0 B0 - a0 D0^2."""

    a0: float
    B0: float
    R0: float
    D0_init: float
    phase: DepinningPhase = field(init=False)

    def __post_init__(self):
        for name in ("a0", "B0", "R0", "D0_init"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidInputError(f"{name} must be finite and positive")
        gap = 2.0 * self.R0 * self.B0 - self.a0 * self.D0_init**2
        scale = 2.0 * self.R0 * self.B0 + self.a0 * self.D0_init**2
        if abs(gap) <= 1e-12 * scale:
            phase = DepinningPhase.CRITICAL
        elif gap > 0:
            phase = DepinningPhase.PINNED
        else:
            phase = DepinningPhase.UNPINNED
        object.__setattr__(self, "phase", phase)

    @property
    def invariant(self):
        """Conserved value a0 D^2 - 2 B0 R at t = 0."""
        return self.a0 * self.D0_init**2 - 2.0 * self.B0 * self.R0

    def pinned_divergence_time(self):
        """Analytic divergence time in the pinned phase (inf otherwise)."""
        E = self.invariant
        if self.phase is not DepinningPhase.PINNED:
            return math.inf
        theta0 = math.atan(self.D0_init * math.sqrt(self.a0 / -E))
        return 2.0 * (theta0 + 0.5 * math.pi) / math.sqrt(self.a0 * -E)


DIVERGENCE_LEVEL = 1e12
INVARIANT_RTOL = 1e-8


def _depinning_rhs(params, y):
    R, D = y
    return np.array([-params.a0 * D * R, -params.B0 * R])


def _rk4(params, y, dt):
    k1 = _depinning_rhs(params, y)
    k2 = _depinning_rhs(params, y + 0.5 * dt * k1)
    k3 = _depinning_rhs(params, y + 0.5 * dt * k2)
    k4 = _depinning_rhs(params, y + dt * k3)
    return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _invariant_defect(params, y):
    R, D = y
    value = params.a0 * D * D - 2.0 * params.B0 * R
    scale = max(params.a0 * D * D + 2.0 * params.B0 * abs(R), params.a0 * params.D0_init**2 + 2 * params.B0 * params.R0)
    return abs(value - params.invariant) / scale


def _advance(params, y, t, dt_out, local_tol=1e-13):
    """Advance by ``dt_out`` with step-doubling error control."""
    target = t + dt_out
    dt = dt_out
    while t < target:
        dt = min(dt, target - t)
        full = _rk4(params, y, dt)
        half = _rk4(params, _rk4(params, y, 0.5 * dt), 0.5 * dt)
        err = np.max(np.abs(full - half) / np.maximum(np.abs(half), 1e-300))
        if err > local_tol and dt > 1e-14 * max(1.0, abs(target)):
            dt *= 0.5
            continue
        y = half + (half - full) / 15.0
        t += dt
        if abs(y[0]) > DIVERGENCE_LEVEL or not np.all(np.isfinite(y)):
            raise BlowUpError(
                f"R diverged past {DIVERGENCE_LEVEL:g}",
                blow_up_time=t,
                bracket=(t - dt, t),
            )
        if err < local_tol / 64:
            dt *= 2.0
    return y


def depinning_trajectory(params, times):
    """(R, D) at an increasing sequence of times starting at 0."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times[0] != 0 or np.any(np.diff(times) < 0):
        raise InvalidInputError("times must increase from 0")
    y = np.array([params.R0, params.D0_init], dtype=float)
    out = np.empty((times.size, 2))
    out[0] = y
    for i in range(1, times.size):
        y = _advance(params, y, times[i - 1], times[i] - times[i - 1])
        if _invariant_defect(params, y) > INVARIANT_RTOL:
            raise InvariantError(f"a0 D^2 - 2 B0 R drifted at t = {times[i]:.6g}")
        out[i] = y
    return out[:, 0], out[:, 1]


def depinning_ode(params, t, n_steps=1000):
    """(R(t), D(t)) for dR/dt = -a0 D R, dD/dt = -B0 R.

    ``n_steps`` output intervals are each advanced by adaptive RK4 so the
    invariant a0 D^2 - 2 B0 R holds to 1e-8 relative after every interval.
    Divergence of R raises :class:`BlowUpError` with a bracketing interval.
    """
    if t < 0:
        raise DomainError("t must be >= 0")
    if n_steps < 1:
        raise InvalidInputError("n_steps must be >= 1")
    if t == 0:
        return float(params.R0), float(params.D0_init)
    R, D = depinning_trajectory(params, np.linspace(0.0, t, n_steps + 1))
    return float(R[-1]), float(D[-1])


def _depinning_coefficients(params, t, quad_n):
    tau = np.linspace(0.0, t, quad_n + 1)
    R, D = depinning_trajectory(params, tau)
    R_spline = CubicSpline(tau, R)
    D_spline = CubicSpline(tau, D)

    def p_coeff(s, tt):
        tt = np.asarray(tt, dtype=float)
        if tt.shape[-1] == tau.size and np.allclose(tt.reshape(-1), tau, rtol=0, atol=1e-14 * max(t, 1)):
            RR, DD = R, D
        else:
            RR, DD = R_spline(tt), D_spline(tt)
        return 2.0 * params.B0 * RR / (s + DD)

    return LinearCoefficients(
        p_coeff=p_coeff,
        q_source=lambda s, tt: -params.B0,
        p_const=lambda s: params.a0 * s,
    ), tau


def depinning_state(params, g0_hat, s, t, quad_n=512):
    """(q, p) of the depinning perturbation, PlainQ normalisation, q(0) = 1."""
    if t < 0:
        raise DomainError("t must be >= 0")
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    if t == 0:
        coeffs = LinearCoefficients(lambda s_, t_: 0.0, lambda s_, t_: 0.0)
        return evolve_closed_form(coeffs, g0_hat, s, 0.0, normalization=Normalization.PLAIN_Q)
    coeffs, _ = _depinning_coefficients(params, t, quad_n)
    return evolve_closed_form(coeffs, g0_hat, s, t, quad_n, normalization=Normalization.PLAIN_Q)


def depinning_q_crossing(params, g0_hat, s, t_max, quad_n=2048):
    """First time in (0, t_max] where q(s; t) changes sign for real s, or None.

    The crossing is bracketed on the quadrature grid and refined by Brent's
    method on the closed form.
    """
    s = float(s)
    coeffs, tau = _depinning_coefficients(params, t_max, quad_n)
    step = tau[1] - tau[0]
    exponent = cumulative_integral(np.real(coeffs.p_coeff(s, tau)), step) + params.a0 * s * tau
    p = np.exp(exponent) * float(np.real(g0_hat(s)))
    q = 1.0 - params.B0 * cumulative_integral(p, step)
    sign_change = np.nonzero(np.sign(q[1:]) != np.sign(q[:-1]))[0]
    if sign_change.size == 0:
        return None
    i = int(sign_change[0])

    def q_at(tt):
        return float(np.real(depinning_state(params, g0_hat, np.array([s]), tt, 256).q_hat[0]))

    lo, hi = tau[i], tau[i + 1]
    if lo == 0.0:
        lo = 0.5 * hi
    return brentq(q_at, lo, hi, xtol=1e-13)


def depinning_ghat(params, g0_hat, s, t, quad_n=512, *, denom_floor=1e-12):
    """p / q with p = exp(a0 s t + 2 B0 int R/(s + D)) g0 and q = 1 - B0 int p."""
    state = depinning_state(params, g0_hat, s, t, quad_n)
    if not np.all(state.valid):
        bad = np.atleast_1d(np.asarray(s, dtype=complex))[~state.valid][0]
        bracket = None
        if abs(bad.imag) == 0:
            crossing = depinning_q_crossing(params, g0_hat, bad.real, t)
            bracket = (crossing, crossing) if crossing is not None else None
        raise PoleError("q vanished in the depinning closed form", s=complex(bad), bracket=bracket)
    out = state.g_hat
    return out if np.ndim(s) else complex(out[0])


def depinning_riccati_rhs(params):
    """(a0 s + 2 R B0/(s + D)) g + B0 g^2 with R, D from the ODE."""

    def rhs(s, g, t):
        R, D = depinning_ode(params, t, 256)
        return (params.a0 * s + 2.0 * R * params.B0 / (s + D)) * g + params.B0 * g * g

    return rhs


# ---------------------------------------------------------------- multiple mergers


@dataclass(frozen=True)
class BranchingMechanism:
    """Psi with Phi defined by 1/Phi(gamma) = -int_{gamma_ref}^{gamma} dg / Psi(g).

    ``working_range`` is the interval on which Psi keeps one sign and Phi is
    inverted.
    """

    psi: object
    gamma_ref: float
    working_range: tuple

    def reciprocal_phi(self, gamma):
        """1/Phi(gamma) by adaptive quadrature."""
        gamma = float(gamma)
        lo, hi = self.working_range
        if not lo <= gamma <= hi:
            raise DomainError(f"gamma = {gamma} outside the working range {self.working_range}")
        inv_psi = lambda g: 1.0 / self.psi(g)  # noqa: E731
        opts = dict(epsabs=0.0, epsrel=1e-13, limit=200)
        ref = self.gamma_ref
        if math.isfinite(ref) or gamma == 0:
            return quad(inv_psi, gamma, ref, **opts)[0]
        # infinite anchor: logarithmic variable up to |gamma| = 1, then the tail
        sign = 1.0 if ref > 0 else -1.0
        if gamma * sign <= 0:
            raise DomainError("gamma must lie on the side of the infinite anchor")
        cut = max(1.0, abs(gamma))
        head = 0.0
        if cut > abs(gamma):
            head = quad(
                lambda u: inv_psi(gamma * math.exp(u)) * gamma * math.exp(u), 0.0, math.log(cut / abs(gamma)), **opts
            )[0]
        tail = quad(inv_psi, sign * cut, ref, **opts)[0]
        return head + tail

    def phi(self, gamma):
        gamma = np.asarray(gamma, dtype=float)
        out = np.array([1.0 / self.reciprocal_phi(g) for g in gamma.reshape(-1)]).reshape(gamma.shape)
        return out[()] if out.ndim else float(out)

    def phi_inverse_reciprocal(self, target):
        """gamma with 1/Phi(gamma) = target, by Brent's method on the working range.

        1/Phi is monotone there since its derivative is -1/Psi.  The search
        expands geometrically from the finite end of the range.
        """
        lo, hi = self.working_range
        f = lambda g: self.reciprocal_phi(g) - target  # noqa: E731
        a, b = _finite_bracket(lo, hi)
        fa, fb = f(a), f(b)
        grow = 0
        with warnings.catch_warnings():
            # probes near the ends of the range may lose accuracy; only the sign matters
            warnings.simplefilter("ignore", IntegrationWarning)
            while fa * fb > 0 and grow < 60:
                a, b = _widen(a, b, lo, hi)
                try:
                    fa, fb = f(a), f(b)
                except (ZeroDivisionError, OverflowError):
                    # Psi under- or overflows before the target is reached
                    break
                grow += 1
        if not fa * fb <= 0:
            raise BlowUpError(f"1/Phi = {target:.6g} is not attained on the working range")
        return brentq(f, a, b, xtol=1e-15, rtol=1e-15, maxiter=200)

    def phi_inverse(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u == 0):
            raise DomainError("phi_inverse is undefined at 0")
        out = np.array([self.phi_inverse_reciprocal(1.0 / v) for v in u.reshape(-1)]).reshape(u.shape)
        return out[()] if out.ndim else float(out)


def _finite_bracket(lo, hi):
    if math.isfinite(lo) and math.isfinite(hi):
        return lo, hi
    if math.isfinite(lo):
        base = lo if lo != 0 else 1e-6
        return base, abs(base) * 2 + 1.0
    if math.isfinite(hi):
        base = hi if hi != 0 else -1e-6
        return -(abs(base) * 2 + 1.0), base
    return -1.0, 1.0


def _widen(a, b, lo, hi):
    width = b - a
    if math.isfinite(lo) and lo == 0 and a > 0:
        a = max(a * 1e-2, 1e-300)
    elif not math.isfinite(lo):
        a = a - 2 * width
    if math.isfinite(hi) and hi == 0 and b < 0:
        b = min(b * 1e-2, -1e-300)
    elif not math.isfinite(hi):
        b = b + 2 * width
    return a, b


def merger_phi_from_psi(psi, gamma_ref=math.inf, working_range=(0.0, math.inf), n_probe=64):
    """Branching mechanism with Phi anchored at ``gamma_ref`` (zero constant).

    The default anchor at infinity is the one that reproduces Phi = -gamma/2
    for Psi = -gamma^2/2.  Psi is probed on the working range and a sign change
    raises :class:`SingularityError`.
    """
    lo, hi = working_range
    if not lo < hi:
        raise InvalidInputError("working range must be a non-empty interval")
    a, b = _finite_bracket(lo, hi)
    probe = np.geomspace(max(a, 1e-8), max(b, 1e-8) * 1e3, n_probe) if a > 0 else np.linspace(a, b, n_probe)
    values = np.array([psi(g) for g in probe])
    if np.any(values == 0) or np.any(np.sign(values) != np.sign(values[0])):
        raise SingularityError("Psi vanishes inside the working range")
    return BranchingMechanism(psi, gamma_ref, (lo, hi))


def merger_evolve(mech, g0_hat, s, t, *, check_dt=1e-4, check_tol=1e-6):
    """g(s, t) = Phi^{-1}(1 / (1/Phi(g0(s)) + t)) for real s, pointwise.

    The result is checked against dg/dt + Psi(g) = 0 by centred differences
    when t > check_dt.
    """
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.empty(s_arr.shape)
    for i, si in enumerate(s_arr):
        g0 = float(np.real(g0_hat(si)))
        if t == 0:
            out[i] = g0
            continue
        start = mech.reciprocal_phi(g0)
        if start == 0:
            raise DomainError("Phi(g0(s)) has no reciprocal")
        out[i] = mech.phi_inverse_reciprocal(start + t)
        if t > check_dt:
            plus = mech.phi_inverse_reciprocal(start + t + check_dt)
            minus = mech.phi_inverse_reciprocal(start + t - check_dt)
            resid = (plus - minus) / (2 * check_dt) + mech.psi(out[i])
            if abs(resid) > check_tol * max(1.0, abs(mech.psi(out[i]))):
                raise InvariantError(f"merger evolution residual {resid:.3e} at s = {si}")
    return out if np.ndim(s) else float(out[0])


# ---------------------------------------------------------------- Strang splitting


def transport_flow(state, c, dt):
    """Exact flow of dg/dt = d/dx(c x^2 g) over dt by characteristics.

    g(x, t + dt) = g(X, t) / (1 - c x dt)^2 with foot X = x / (1 - c x dt);
    feet beyond the grid contribute zero and warn when the data there are
    not negligible.
    """
    x = state.x
    values = np.asarray(state.values, dtype=float)
    if c == 0 or dt == 0:
        return state.with_values(values.copy())
    denom = 1.0 - c * x * dt
    inside = denom > 0
    foot = np.full(x.shape, np.inf)
    foot[inside] = x[inside] / denom[inside]
    on_grid = inside & (foot <= state.x_max)
    scale = max(np.max(np.abs(values)), 1e-300)
    if np.any(~on_grid) and np.max(np.abs(values[-4:])) > 1e-10 * scale:
        warnings.warn("characteristics leave the grid; data beyond x_max taken as zero", TruncationWarning, stacklevel=2)
    spline = CubicSpline(x, values)
    out = np.zeros_like(values)
    out[on_grid] = spline(foot[on_grid]) / denom[on_grid] ** 2
    return state.with_values(out)


def gain_flow(state, D0, dt, *, tol=1e-16, max_terms=200):
    """Exact flow of dg/dt = -D0 g + 1/2 g*g over dt with frozen D0.

    In transform space g(dt) = e^{-D0 dt} g0 / (1 - w g0) with
    w = (1 - e^{-D0 dt}) / (2 D0); the geometric series is summed in x space
    as e^{-D0 dt} sum_k w^k g0^{*(k+1)} with grid convolutions.
    """
    h = state.h
    g0 = np.asarray(state.values, dtype=float)
    weight = 0.5 * dt if D0 == 0 else 0.5 * (-math.expm1(-D0 * dt)) / D0
    term = g0.copy()
    total = g0.copy()
    for _ in range(max_terms):
        term = weight * trapezoid_convolution(term, g0, h)
        total += term
        if np.max(np.abs(term)) <= tol * max(np.max(np.abs(total)), 1e-300):
            break
    else:
        raise BlowUpError("gain-flow series did not converge; step too large for the data mass")
    return state.with_values(math.exp(-D0 * dt) * total)


def strang_split_step(state, c, D0_fn, t, dt):
    """One step of half transport, full gain flow (D0 at the midpoint), half transport."""
    if not dt > 0:
        raise InvalidInputError("dt must be positive")
    half = transport_flow(state, c, 0.5 * dt)
    mid = gain_flow(half, float(D0_fn(t + 0.5 * dt)), dt)
    return transport_flow(mid, c, 0.5 * dt)


def strang_solve(state, c, D0_fn, t_end, n_steps):
    """Repeated Strang steps from t = 0 to t_end."""
    dt = t_end / n_steps
    for k in range(n_steps):
        state = strang_split_step(state, c, D0_fn, k * dt, dt)
    return state


# ---------------------------------------------------------------- Cole-Hopf


@dataclass(frozen=True)
class ColeHopfSolution:
    s: np.ndarray
    q_hat: np.ndarray
    p_hat: np.ndarray
    g_hat: np.ndarray
    log_derivative_defect: float


class _ColeHopfData:
    """Initial heat data q0 = exp(-(1/2 nu) int_s^inf g0) on a padded s-line."""

    def __init__(self, g0_hat, nu, s_max, n_grid):
        self.g0_hat = g0_hat
        self.nu = nu
        self.s_max = s_max
        grid = np.linspace(-s_max, s_max, n_grid + 1)
        g = np.real_if_close(np.asarray(g0_hat(grid)))
        edge = max(abs(g[0]), abs(g[-1]))
        if edge > TAIL_THRESHOLD * max(np.max(np.abs(g)), 1e-300):
            warnings.warn("initial data not decayed at the s-line ends", TruncationWarning, stacklevel=3)
        step = grid[1] - grid[0]
        running = cumulative_integral(g, step)
        tail = running[-1] - running
        self.spline = CubicSpline(grid, tail)
        self.total = running[-1]

    def tail(self, sigma):
        out = np.where(sigma >= self.s_max, 0.0, np.where(sigma <= -self.s_max, self.total, 0.0))
        inside = np.abs(sigma) < self.s_max
        out = out.astype(np.result_type(out, self.spline.c))
        out[inside] = self.spline(sigma[inside])
        return out

    def q0(self, sigma):
        return np.exp(-self.tail(sigma) / (2.0 * self.nu))

    def p0(self, sigma):
        inside = np.abs(sigma) < self.s_max
        g = np.zeros(sigma.shape, dtype=complex)
        g[inside] = self.g0_hat(sigma[inside])
        return np.real_if_close(g) * self.q0(sigma)


def cole_hopf_solve(g0_hat, nu, s, t, *, s_max=30.0, n_grid=2**14, n_hermite=96, fd_step=1e-3):
    """Cole-Hopf solution of dg/dt = nu g_ss + 1/2 (g^2)_s on the real s-line.

    q and p = 2 nu dq/ds both solve the heat equation; they are propagated by
    Gauss-Hermite heat-kernel quadrature from q0 = exp(-(1/2 nu) int_s^inf g0)
    extended by constants beyond [-s_max, s_max].  g = p / q; the reported
    defect compares it with 2 nu d/ds log q by centred differences.
    """
    if not nu > 0:
        raise InvalidInputError("nu must be positive")
    if t < 0:
        raise DomainError("t must be >= 0")
    s = np.atleast_1d(np.asarray(s, dtype=float))
    data = _ColeHopfData(g0_hat, nu, s_max, n_grid)
    if t == 0:
        q = data.q0(s)
        p = data.p0(s)
    else:
        nodes, weights = np.polynomial.hermite.hermgauss(n_hermite)
        spread = 2.0 * math.sqrt(nu * t)

        def heat(fn, points):
            shifted = points[:, None] + spread * nodes[None, :]
            vals = fn(shifted.reshape(-1)).reshape(shifted.shape)
            return vals @ weights / math.sqrt(math.pi)

        data_t = heat
        q = data_t(data.q0, s)
        p = data_t(data.p0, s)
    if np.any(np.real(q) <= 0):
        raise PoleError("q lost positivity; heat-flow discretisation failed")
    g = p / q
    if t == 0:
        q_plus, q_minus = data.q0(s + fd_step), data.q0(s - fd_step)
    else:
        q_plus, q_minus = data_t(data.q0, s + fd_step), data_t(data.q0, s - fd_step)
    log_deriv = 2 * nu * (np.log(q_plus) - np.log(q_minus)) / (2 * fd_step)
    defect = float(np.max(np.abs(log_deriv - g)))
    return ColeHopfSolution(s, q, p, g, defect)


def cole_hopf_ghat(g0_hat, nu, s, t, **kwargs):
    """Cole-Hopf value g(s; t); see :func:`cole_hopf_solve`."""
    sol = cole_hopf_solve(g0_hat, nu, s, t, **kwargs)
    return sol.g_hat if np.ndim(s) else sol.g_hat[0]


__all__ = [
    "CoarseningInput",
    "CoarseningState",
    "coarsening_ghat",
    "coarsening_g1_hat",
    "coarsening_state",
    "coarsening_coefficients",
    "coarsening_coupled",
    "coarsening_riccati_rhs",
    "DepinningPhase",
    "DepinningParams",
    "depinning_ode",
    "depinning_trajectory",
    "depinning_state",
    "depinning_ghat",
    "depinning_q_crossing",
    "depinning_riccati_rhs",
    "BranchingMechanism",
    "merger_phi_from_psi",
    "merger_evolve",
    "transport_flow",
    "gain_flow",
    "strang_split_step",
    "strang_solve",
    "ColeHopfSolution",
    "cole_hopf_solve",
    "cole_hopf_ghat",
]
