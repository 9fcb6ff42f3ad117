"""Nonlinear graph flows solved by characteristics.

Particles move with q(a, t) determined by a constant (or linearly decaying)
momentum p(a, t); the graph map pi(., t) with p = pi(q, t) then solves an
inviscid Burgers-type equation.  Evaluating pi(x, t) means inverting the
label map x = Q(t, a).
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import BlowUpError, DomainError, InvalidInputError, InvariantError, ShockError

N_SCAN = 1024


class Variant(enum.Enum):
    INVISCID = "inviscid"
    LINEAR_DECAY = "linear_decay"
    SPEED_MODULATED = "speed_modulated"


class Kernel(enum.Enum):
    ADDITIVE = "additive"
    MULTIPLICATIVE = "multiplicative"


@dataclass(frozen=True)
class GraphFlowProblem:
    """Initial map pi0 with optional Jacobian; ``speed`` is f in B = f(|p|^2).

    ``dim`` is N; for N = 1 the maps act elementwise on arrays of labels,
    otherwise on the last axis.
    """

    pi0: object
    pi0_jacobian: object = None
    variant: Variant = Variant.INVISCID
    speed: object = None
    dim: int = 1

    def __post_init__(self):
        if self.variant is Variant.SPEED_MODULATED and self.speed is None:
            raise InvalidInputError("speed-modulated flows need the speed function f")

    def travel(self, t):
        """Factor multiplying the displacement: t, or 1 - e^{-t} with linear decay."""
        return -math.expm1(-t) if self.variant is Variant.LINEAR_DECAY else t

    def momentum_factor(self, t):
        return math.exp(-t) if self.variant is Variant.LINEAR_DECAY else 1.0

    def velocity(self, a):
        """Displacement per unit travel: pi0(a) or f(|pi0(a)|^2) pi0(a)."""
        p = np.asarray(self.pi0(a), dtype=float)
        if self.variant is Variant.SPEED_MODULATED:
            sq = p * p if self.dim == 1 else np.sum(p * p, axis=-1, keepdims=True)
            p = np.asarray(self.speed(sq), dtype=float) * p
        return p

    def label_map(self, a, t):
        """Q(t, a)."""
        return np.asarray(a, dtype=float) + self.travel(t) * self.velocity(a)


@dataclass(frozen=True)
class CharacteristicEnsemble:
    """Labels with their positions and momenta at one time."""

    dim: int
    labels: np.ndarray
    momenta: np.ndarray
    positions: np.ndarray
    time: float


def characteristics(problem, labels, t):
    """Positions q(a, t) and momenta p(a, t) for the given labels."""
    labels = np.asarray(labels, dtype=float)
    dim = problem.dim
    p0 = np.asarray(problem.pi0(labels), dtype=float)
    momenta = p0 if problem.variant is not Variant.LINEAR_DECAY else problem.momentum_factor(t) * p0
    positions = problem.label_map(labels, t)
    return CharacteristicEnsemble(dim, labels, momenta, positions, float(t))


def _scalar_velocity(problem, a):
    return problem.velocity(a)


def _velocity_derivative(problem, a):
    if problem.pi0_jacobian is not None and problem.variant is not Variant.SPEED_MODULATED:
        return np.asarray(problem.pi0_jacobian(a), dtype=float)
    step = 1e-6 * (1.0 + np.abs(a))
    return (_scalar_velocity(problem, a + step) - _scalar_velocity(problem, a - step)) / (2 * step)


def _scan_halfwidth(problem, x, travel):
    """Window half-width containing the roots of x = a + travel v(a).

    For bounded velocities the window grows until it covers the largest
    displacement seen inside it, which then contains every root.  Otherwise
    it grows until the label map changes sign across the window at every
    target, which brackets the roots of an eventually monotone map.
    """
    width = 1.0 + travel * float(np.max(np.abs(_scalar_velocity(problem, x))))
    for _ in range(30):
        probe = np.linspace(-width, width, 257)
        a = x[:, None] + probe[None, :]
        reach = travel * float(np.max(np.abs(_scalar_velocity(problem, a))))
        if reach <= width:
            return width * 1.01
        width = 1.25 * reach
        if not math.isfinite(width):
            break
    width = 1.0 + travel * float(np.max(np.abs(_scalar_velocity(problem, x))))
    for _ in range(200):
        left = problem.label_map(x - width, _travel_time(problem, travel)) - x
        right = problem.label_map(x + width, _travel_time(problem, travel)) - x
        if np.all((left < 0) & (right > 0)):
            return width
        width *= 2.0
        if not math.isfinite(width):
            break
    raise ShockError("label map could not be bracketed around the target points")


def _travel_time(problem, travel):
    return -math.log1p(-travel) if problem.variant is Variant.LINEAR_DECAY else travel


def solve_labels_1d(problem, x, t, tol=1e-13, n_scan=N_SCAN):
    """Labels a with x = Q(t, a) for an array of 1-D targets (vectorised).

    A scan over a window that provably contains all roots (up to the scan
    resolution) counts sign changes; anything other than exactly one root
    raises :class:`ShockError`.  The root is then refined by Newton steps
    safeguarded by bisection on the bracket.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    travel = problem.travel(t)
    if travel == 0:
        return x.copy()
    width = _scan_halfwidth(problem, x, travel)
    offsets = np.linspace(-width, width, n_scan)
    grid = x[:, None] + offsets[None, :]
    F = grid + travel * _scalar_velocity(problem, grid) - x[:, None]
    sign = np.sign(F)
    crossings = (sign[:, 1:] * sign[:, :-1] < 0) | (sign[:, :-1] == 0)
    count = crossings.sum(axis=1)
    if np.any(count != 1):
        bad = int(np.nonzero(count != 1)[0][0])
        raise ShockError(
            f"label map at x = {x[bad]:.6g}, t = {t:.6g} has {int(count[bad])} roots in the scan window"
        )
    idx = np.argmax(crossings, axis=1)
    rows = np.arange(x.size)
    lo = grid[rows, idx].copy()
    hi = grid[rows, idx + 1].copy()
    f_lo = F[rows, idx].copy()
    a = 0.5 * (lo + hi)
    scale = 1.0 + np.abs(x)
    for _ in range(200):
        f = a + travel * _scalar_velocity(problem, a) - x
        left = np.sign(f) == np.sign(f_lo)
        lo = np.where(left, a, lo)
        f_lo = np.where(left, f, f_lo)
        hi = np.where(left, hi, a)
        deriv = 1.0 + travel * _velocity_derivative(problem, a)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = a - f / deriv
        inside = np.isfinite(newton) & (newton > np.minimum(lo, hi)) & (newton < np.maximum(lo, hi))
        a_next = np.where(inside, newton, 0.5 * (lo + hi))
        done = (np.abs(f) <= tol * scale) | (np.abs(a_next - a) <= 4e-16 * (1.0 + np.abs(a)))
        a = np.where(done, a, a_next)
        if np.all(done):
            return a
    raise ShockError("Newton iteration for the label map did not converge")


def _solve_labels_nd(problem, x, t, tol, max_iter=100):
    x = np.asarray(x, dtype=float)
    travel = problem.travel(t)
    if travel == 0:
        return x.copy()
    n = x.size
    a = x - travel * problem.velocity(x)

    def residual(aa):
        return problem.label_map(aa, t) - x

    def jacobian(aa):
        if problem.pi0_jacobian is not None and problem.variant is not Variant.SPEED_MODULATED:
            return np.eye(n) + travel * np.asarray(problem.pi0_jacobian(aa), dtype=float)
        J = np.empty((n, n))
        for j in range(n):
            step = 1e-6 * (1.0 + abs(aa[j]))
            e = np.zeros(n)
            e[j] = step
            J[:, j] = (residual(aa + e) - residual(aa - e)) / (2 * step)
        return J

    f = residual(a)
    for _ in range(max_iter):
        if np.linalg.norm(f) <= tol * (1.0 + np.linalg.norm(x)):
            return a
        try:
            delta = np.linalg.solve(jacobian(a), -f)
        except np.linalg.LinAlgError as exc:
            raise ShockError("label-map Jacobian is singular") from exc
        lam = 1.0
        while lam > 1e-8:
            trial = a + lam * delta
            f_trial = residual(trial)
            if np.linalg.norm(f_trial) < np.linalg.norm(f) or np.linalg.norm(f_trial) <= tol:
                break
            lam *= 0.5
        a, f = trial, f_trial
    raise ShockError("Newton iteration for the label map did not converge")


def solve_at(problem, x, t, tol=1e-13, n_scan=N_SCAN):
    """pi(x, t) = p at the label a solving x = Q(t, a).

    ``x`` is a scalar (1-D flows) or a length-N point.  Returns pi0(a), or
    e^{-t} pi0(a) for the linear-decay variant.
    """
    if t < 0:
        raise DomainError("t must be >= 0")
    if not tol > 0:
        raise InvalidInputError("tol must be positive")
    x_arr = np.asarray(x, dtype=float)
    if problem.dim == 1:
        if x_arr.ndim != 0:
            raise InvalidInputError("1-D flows take a scalar x; use solve_many for arrays")
        a = solve_labels_1d(problem, x_arr, t, tol, n_scan)[0]
        value = float(problem.pi0(a))
    else:
        a = _solve_labels_nd(problem, x_arr, t, tol)
        value = np.asarray(problem.pi0(a), dtype=float)
    return problem.momentum_factor(t) * value


def solve_many(problem, x, t, tol=1e-13, n_scan=N_SCAN):
    """Vectorised :func:`solve_at` for an array of 1-D targets."""
    if problem.dim != 1:
        raise InvalidInputError("solve_many is for 1-D flows")
    a = solve_labels_1d(problem, x, t, tol, n_scan)
    return problem.momentum_factor(t) * np.asarray(problem.pi0(a), dtype=float)


def shock_time(problem, scan_domain, n_scan=N_SCAN):
    """First caustic time of a 1-D characteristic map (inf when none).

    The minimum of the velocity derivative m over the scan is found by
    centred differences; t* = -1/m, or -log(1 + 1/m) when m < -1 for the
    linear-decay variant.
    """
    if n_scan < 16:
        raise InvalidInputError("n_scan must be >= 16")
    lo, hi = scan_domain
    a = np.linspace(lo, hi, n_scan)
    v = _scalar_velocity(problem, a)
    slope = (v[2:] - v[:-2]) / (a[2:] - a[:-2])
    m = float(np.min(slope))
    if m >= 0:
        return math.inf
    if problem.variant is Variant.LINEAR_DECAY:
        return -math.log1p(1.0 / m) if m < -1 else math.inf
    return -1.0 / m


def riccati_subflow(pi_R0, t, *, check_dt=1e-5, check_rtol=1e-6, cond_limit=1e12):
    """pi_R0 (I + t pi_R0)^{-1}, checked against d/dt pi + pi^2 = 0."""
    P = np.atleast_2d(np.asarray(pi_R0, dtype=float))
    if P.shape[0] != P.shape[1]:
        raise InvalidInputError("pi_R0 must be square")
    scalar = np.ndim(pi_R0) == 0

    def flow(tt):
        M = np.eye(P.shape[0]) + tt * P
        if np.linalg.cond(M) > cond_limit:
            raise BlowUpError(f"I + t pi_R0 is singular at t = {tt:.6g}", blow_up_time=tt)
        return np.linalg.solve(M.T, P.T).T

    out = flow(t)
    if t > check_dt:
        deriv = (flow(t + check_dt) - flow(t - check_dt)) / (2 * check_dt)
        resid = np.max(np.abs(deriv + out @ out))
        if resid > check_rtol * max(1.0, np.max(np.abs(out @ out))):
            raise InvariantError(f"Riccati subflow residual {resid:.3e}")
    return float(out[0, 0]) if scalar else out


def brownian_increments(n_steps, dt, dim=1, seed=0, realization=0):
    """N(0, dt) increments from a stream keyed by (seed, realization)."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(realization,)))
    shape = (n_steps,) if dim == 1 else (n_steps, dim)
    return rng.normal(0.0, math.sqrt(dt), size=shape)


def _brownian_value(increments, dt, t):
    steps = t / dt
    k = int(round(steps))
    if abs(steps - k) > 1e-9 * max(1.0, steps) or k > len(increments):
        raise DomainError("t must lie on the increment grid")
    return np.sum(np.asarray(increments, dtype=float)[:k], axis=0)


def stochastic_burgers_realization(problem, nu, brownian_increments, x, t, dt, tol=1e-13):
    """pi(x, t) for one Brownian path: solve x - sqrt(2 nu) B_t = a + t pi0(a)."""
    if problem.variant is not Variant.INVISCID:
        raise InvalidInputError("stochastic Burgers realisations use the inviscid variant")
    if nu < 0:
        raise InvalidInputError("nu must be >= 0")
    if nu == 0:
        return solve_at(problem, x, t, tol)
    B = _brownian_value(brownian_increments, dt, t)
    shifted = np.asarray(x, dtype=float) - math.sqrt(2.0 * nu) * B
    return solve_at(problem, shifted[()] if np.ndim(shifted) == 0 else shifted, t, tol)


def stochastic_burgers_ensemble(problem, nu, x, t, n_steps, n_realizations, seed, tol=1e-13):
    """Per-realisation values at a scalar x; realisation r uses stream (seed, r)."""
    if np.ndim(x) != 0:
        raise InvalidInputError("ensembles are evaluated at a scalar point")
    dt = t / n_steps
    B = np.array([np.sum(brownian_increments(n_steps, dt, 1, seed, r)) for r in range(n_realizations)])
    shifted = float(x) - math.sqrt(2.0 * nu) * B
    return solve_many(problem, shifted, t, tol)


def desingularized_smoluchowski_pi(g0_weighted_hat, kernel, s, t, tol=1e-13):
    """Transform-space solution for the additive or multiplicative kernel.

    ``g0_weighted_hat`` is the desingularised transform int (e^{-sx} - 1) g0
    (additive) or the modified one int (e^{-sx} - 1) x g0 (multiplicative);
    the first flows by inviscid Burgers with linear decay, the second by
    inviscid Burgers.  A shock error in the multiplicative case marks gelation.
    """
    kernel = Kernel(kernel)
    variant = Variant.LINEAR_DECAY if kernel is Kernel.ADDITIVE else Variant.INVISCID
    problem = GraphFlowProblem(pi0=g0_weighted_hat, variant=variant)
    s_arr = np.asarray(s, dtype=float)
    if s_arr.ndim == 0:
        return solve_at(problem, float(s_arr), t, tol)
    return solve_many(problem, s_arr.reshape(-1), t, tol).reshape(s_arr.shape)
