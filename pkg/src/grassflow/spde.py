"""Stochastic field with a nonlocal matrix-product nonlinearity on the torus.

In Fourier variables u(k, kappa) the equation reads

    du = -alpha K^2 u dt + 2 pi gamma diag(dw) u - 2 pi epsilon u (R1 u) dt,

with w(k) the Fourier coefficients of a periodic Brownian sheet and R1 the
reflection k -> -k.  Two solvers are provided: an exponential Euler scheme
stepping u directly, and the linear (q, p) system whose quotient
p q^{-1} solves the same equation.
"""

import enum
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from ._quadrature import phi1
from .errors import FieldOverflowError, InvalidInputError, ProjectionError
from .xform import SpectralField, dft_2d, idft_2d, torus_grid, wavenumbers

COND_LIMIT = 1e12


class ItoCorrection(enum.Enum):
    """Exponent correction used by the closed-form p.

    CONSISTENT drops the correction: the complex increments have
    E[dw(k)^2] = 0, so exp(2 pi gamma w_t) already solves the Ito equation
    that the direct scheme discretises.  PRINTED keeps -t pi gamma^2 / k^2.
    """

    CONSISTENT = "consistent"
    PRINTED = "printed"


@dataclass(frozen=True)
class SpdeParams:
    alpha: float = 1.0
    gamma: float = 10.0
    epsilon: float = 1000.0
    T: float = 0.007
    n_steps: int = 256
    n_modes: int = 32
    noise_amp: float = 0.001
    ito_correction: ItoCorrection = ItoCorrection.CONSISTENT

    def __post_init__(self):
        if not self.alpha > 0:
            raise InvalidInputError("alpha must be positive")
        if self.gamma < 0:
            raise InvalidInputError("gamma must be non-negative")
        if not self.T > 0 or self.n_steps < 1:
            raise InvalidInputError("T must be positive and n_steps >= 1")
        if self.n_modes < 2 or self.n_modes & (self.n_modes - 1):
            raise InvalidInputError("n_modes must be a power of two >= 2")
        object.__setattr__(self, "ito_correction", ItoCorrection(self.ito_correction))

    @property
    def dt(self):
        return self.T / self.n_steps

    def as_dict(self):
        return {
            "alpha": self.alpha,
            "gamma": self.gamma,
            "epsilon": self.epsilon,
            "T": self.T,
            "n_steps": self.n_steps,
            "dt": self.dt,
            "n_modes": self.n_modes,
            "noise_amp": self.noise_amp,
            "ito_correction": self.ito_correction.value,
        }


@dataclass(frozen=True)
class BrownianSheetPath:
    """Per-step Fourier increments dw_m(k), k in -n/2..n/2-1 (index order).

    For k > 0, dw(k) = (dX - i dY) / (2 sqrt(pi) k) with dX, dY ~ N(0, dt);
    dw(-k) is the conjugate, dw(0) = 0, and the unpaired mode -n/2 is zero.
    """

    n_modes: int
    n_steps: int
    dt: float
    increments: np.ndarray
    seed: int = None

    def __post_init__(self):
        inc = np.asarray(self.increments)
        if inc.shape != (self.n_steps, self.n_modes):
            raise InvalidInputError(f"increments must have shape {(self.n_steps, self.n_modes)}")
        inc = inc.copy()
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    @classmethod
    def generate(cls, n_modes, n_steps, dt, seed):
        """Sample the path by Brownian-bridge refinement.

        Level 0 draws the endpoint, level j the 2^(j-1) new midpoints, so a
        seed fixes one sheet and every dyadic ``n_steps`` sees the same
        realisation at its own resolution.  Non-dyadic step counts fall back
        to direct increments.
        """
        rng = np.random.default_rng(seed)
        positive = np.arange(1, n_modes // 2)
        T = n_steps * dt
        if n_steps & (n_steps - 1) == 0:
            values = np.zeros((2, 2, positive.size))
            values[:, 1] = rng.normal(0.0, math.sqrt(T), size=(2, positive.size))
            span = T
            while values.shape[1] - 1 < n_steps:
                mids = 0.5 * (values[:, :-1] + values[:, 1:])
                mids += rng.normal(0.0, math.sqrt(span / 4.0), size=mids.shape)
                merged = np.empty((2, 2 * values.shape[1] - 1, positive.size))
                merged[:, 0::2] = values
                merged[:, 1::2] = mids
                values = merged
                span *= 0.5
            draws = np.diff(values, axis=1)
        else:
            draws = rng.normal(0.0, math.sqrt(dt), size=(2, n_steps, positive.size))
        dw_pos = (draws[0] - 1j * draws[1]) / (2.0 * math.sqrt(math.pi) * positive)
        inc = np.zeros((n_steps, n_modes), dtype=complex)
        center = n_modes // 2
        inc[:, center + positive] = dw_pos
        inc[:, center - positive] = np.conj(dw_pos)
        return cls(n_modes, n_steps, dt, inc, seed)

    def coarsen(self, factor):
        """The same path sampled on a grid ``factor`` times coarser."""
        if self.n_steps % factor:
            raise InvalidInputError("factor must divide n_steps")
        inc = self.increments.reshape(self.n_steps // factor, factor, self.n_modes).sum(axis=1)
        return BrownianSheetPath(self.n_modes, self.n_steps // factor, self.dt * factor, inc, self.seed)

    def cumulative(self):
        """w at the step times 0, dt, ..., n_steps dt (first row zero)."""
        out = np.zeros((self.n_steps + 1, self.n_modes), dtype=complex)
        out[1:] = np.cumsum(self.increments, axis=0)
        return out


def reflect_k(field):
    """R1: c(k, kappa) -> c(-k, kappa); the unpaired mode -n/2 maps to itself."""
    coeffs = field.coeffs if isinstance(field, SpectralField) else np.asarray(field)
    n = coeffs.shape[0]
    out = coeffs[(n - np.arange(n)) % n]
    return SpectralField(out, getattr(field, "real_field", False)) if isinstance(field, SpectralField) else out


def profile_function(x, y):
    """sech(10 (x + y - 2 pi)) sech(10 (y - pi)) evaluated on [0, 2 pi)^2 images.

    Points of the [-pi, pi) torus grid are wrapped into [0, 2 pi), where the
    profile is centred and decays to machine level at the edges, so the
    periodic samples are smooth.
    """
    xw = np.mod(x, 2.0 * np.pi)
    yw = np.mod(y, 2.0 * np.pi)
    return 1.0 / (np.cosh(10.0 * (xw + yw - 2.0 * np.pi)) * np.cosh(10.0 * (yw - np.pi)))


def initial_profile(n_modes, noise_amp=0.0, seed=0):
    """Spectrum of the sech profile plus noise_amp N(0,1) in each mode's real and imaginary part."""
    grid = torus_grid(n_modes)
    X, Y = np.meshgrid(grid, grid, indexing="ij")
    spec = dft_2d(profile_function(X, Y))
    if noise_amp == 0:
        return spec
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((2, n_modes, n_modes))
    return SpectralField(spec.coeffs + noise_amp * (noise[0] + 1j * noise[1]), real_field=False)


def _decay(params, dt):
    k = wavenumbers(params.n_modes).astype(float)
    return -dt * params.alpha * k * k


def direct_step(u, dw, params, *, step_index=None):
    """One exponential Euler step with noise and the matrix product frozen at the start."""
    coeffs = u.coeffs if isinstance(u, SpectralField) else np.asarray(u)
    dw = np.asarray(dw)
    if dw.shape != (coeffs.shape[0],):
        raise InvalidInputError("increment length must match n_modes")
    z = _decay(params, params.dt)
    growth = np.exp(z)[:, None]
    # blow-up is reported below as FieldOverflowError, not as float warnings
    with np.errstate(over="ignore", invalid="ignore"):
        nonlinear = coeffs @ reflect_k(coeffs)
        out = growth * (coeffs + 2.0 * np.pi * params.gamma * dw[:, None] * coeffs)
        out = out - 2.0 * np.pi * params.epsilon * params.dt * phi1(z.astype(complex))[:, None] * nonlinear
    if not np.all(np.isfinite(out)):
        raise FieldOverflowError(f"direct scheme overflow at step {step_index}", step=step_index)
    return SpectralField(out) if isinstance(u, SpectralField) else out


def direct_solve(u0, path, params, checkpoints=()):
    """Roll out direct_step over the path; returns final coefficients and checkpoint snapshots."""
    u = u0.coeffs
    snaps = {}
    for m in range(path.n_steps):
        u = direct_step(u, path.increments[m], params, step_index=m)
        if m + 1 in checkpoints:
            snaps[m + 1] = u.copy()
    return SpectralField(u), snaps


def _ito_exponent(params, t):
    k = wavenumbers(params.n_modes).astype(float)
    out = np.zeros_like(k)
    if params.ito_correction is ItoCorrection.PRINTED:
        nonzero = k != 0
        out[nonzero] = -t * np.pi * params.gamma**2 / k[nonzero] ** 2
    return out


def p_closed_form(p0, w_t, t, params):
    """exp(-t alpha K^2 + 2 pi gamma diag(w_t) + correction) p0, row-wise."""
    exponent = _decay(params, t) + 2.0 * np.pi * params.gamma * w_t + _ito_exponent(params, t)
    return np.exp(exponent)[:, None] * p0


def _quotient(p, q):
    cond = np.linalg.cond(q)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise ProjectionError(f"q is numerically singular (condition {cond:.3e})")
    # g q = p  <=>  q^T g^T = p^T
    return np.linalg.solve(q.T, p.T).T


def grassmann_solve(g0, path, params, checkpoints=()):
    """Closed-form p at every step time, trapezoid q, and g = p q^{-1} at T.

    Returns the final field and a dict of checkpoint fields (same rule
    applied to the partial integral of q).
    """
    p0 = g0.coeffs
    n = p0.shape[0]
    w = path.cumulative()
    dt = path.dt
    q = np.eye(n, dtype=complex)
    prev = reflect_k(p0)
    snaps = {}
    p = p0
    for m in range(1, path.n_steps + 1):
        p = p_closed_form(p0, w[m], m * dt, params)
        current = reflect_k(p)
        q = q + 2.0 * np.pi * params.epsilon * 0.5 * dt * (prev + current)
        prev = current
        if m in checkpoints:
            snaps[m] = _quotient(p, q)
    return SpectralField(_quotient(p, q)), snaps


def _rel_l2(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(a))


@dataclass
class ComparisonReport:
    params: SpdeParams
    seed: int
    direct_field: np.ndarray
    grassmann_field: np.ndarray
    rel_l2: float
    checkpoints: dict = field(default_factory=dict)

    def diagnostics(self):
        return {
            "rel_l2": self.rel_l2,
            "rel_l2_per_checkpoint": {str(k): v for k, v in sorted(self.checkpoints.items())},
            "max_imag_direct": float(np.max(np.abs(self.direct_field.imag))),
            "max_imag_grassmann": float(np.max(np.abs(self.grassmann_field.imag))),
            "parameters": self.params.as_dict(),
            "seed": self.seed,
        }

    def write(self, directory):
        """field_direct.csv, field_grassmann.csv (real parts, row-major) and diagnostics.json."""
        os.makedirs(directory, exist_ok=True)
        header = f"# n_modes={self.params.n_modes} T={self.params.T!r} seed={self.seed}"
        for name, values in (("field_direct.csv", self.direct_field), ("field_grassmann.csv", self.grassmann_field)):
            with open(os.path.join(directory, name), "w") as fh:
                fh.write(header + "\n")
                np.savetxt(fh, np.real(values), delimiter=",", fmt="%.17g")
        with open(os.path.join(directory, "diagnostics.json"), "w") as fh:
            json.dump(self.diagnostics(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def run_comparison(params, seed, path=None, n_checkpoints=8):
    """Run both schemes on identical data and noise; gap measured in physical space."""
    if path is None:
        path = BrownianSheetPath.generate(params.n_modes, params.n_steps, params.dt, seed)
    if path.n_steps != params.n_steps or path.n_modes != params.n_modes:
        raise InvalidInputError("path does not match the parameters")
    g0 = initial_profile(params.n_modes, params.noise_amp, seed)
    every = max(params.n_steps // n_checkpoints, 1)
    marks = tuple(range(every, params.n_steps + 1, every))
    direct, d_snaps = direct_solve(g0, path, params, marks)
    grass, g_snaps = grassmann_solve(g0, path, params, marks)
    direct_x = idft_2d(direct)
    grass_x = idft_2d(grass)
    per_checkpoint = {
        m: _rel_l2(idft_2d(SpectralField(d_snaps[m])), idft_2d(SpectralField(g_snaps[m]))) for m in marks
    }
    return ComparisonReport(params, seed, direct_x, grass_x, _rel_l2(direct_x, grass_x), per_checkpoint)
