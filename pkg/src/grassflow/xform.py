"""Laplace and Fourier transform infrastructure.

Forward Laplace transforms are computed from grid samples, inverse transforms
by quadrature along a vertical (Bromwich) line, and initial values of a
function are recovered from its transform by extrapolating along a ray.  The
two-dimensional DFT helpers fix the Fourier-coefficient convention used by the
torus solvers.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import exp1

from ._quadrature import chunked_map, corrected_trapezoid_weights, richardson_table
from .errors import ContourError, InvalidInputError, LimitError, TruncationWarning

TAIL_THRESHOLD = 1e-10
IMAG_RTOL = 1e-6


@dataclass(frozen=True)
class GridFunction1D:
    """Samples on the uniform grid x_j = j * x_max / (n - 1), j = 0..n-1."""

    x_max: float
    n: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if self.x_max <= 0 or self.n < 2:
            raise InvalidInputError("grid needs x_max > 0 and n >= 2")
        if values.shape != (self.n,):
            raise InvalidInputError(f"expected {self.n} samples, got shape {values.shape}")
        object.__setattr__(self, "values", values)

    @property
    def h(self):
        return self.x_max / (self.n - 1)

    @property
    def x(self):
        return np.linspace(0.0, self.x_max, self.n)

    @classmethod
    def from_function(cls, fn, x_max, n):
        x = np.linspace(0.0, x_max, n)
        return cls(x_max, n, np.asarray(fn(x), dtype=float))

    def with_values(self, values):
        return GridFunction1D(self.x_max, self.n, np.asarray(values))


@dataclass(frozen=True)
class LaplaceSamples:
    """Values of a transform on a set of complex frequencies."""

    s_points: np.ndarray
    values: np.ndarray
    abscissa: float = 0.0

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.s_points, dtype=complex))
        v = np.atleast_1d(np.asarray(self.values, dtype=complex))
        if s.size == 0 or s.shape != v.shape:
            raise InvalidInputError("s_points and values must be non-empty and equally long")
        if np.any(s.real < self.abscissa):
            raise InvalidInputError("every sample frequency must satisfy Re(s) >= abscissa")
        object.__setattr__(self, "s_points", s)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class BromwichContour:
    """Vertical line Re(s) = gamma truncated to |Im(s)| <= height.

    ``tail_correction`` adds the analytic contribution of the discarded tails
    assuming F(s) ~ c1/s + c2/s^2 there, with c1, c2 fitted from F at the
    truncation height.  It removes the slowly decaying truncation error of
    transforms of functions that jump at x = 0.
    """

    gamma: float = 0.5
    height: float = 200.0
    n_nodes: int = 2**14
    tail_correction: bool = True

    def __post_init__(self):
        if self.gamma < 0:
            raise InvalidInputError("contour offset gamma must be >= 0")
        if self.height <= 0 or self.n_nodes < 2:
            raise InvalidInputError("contour needs height > 0 and n_nodes >= 2")

    @classmethod
    def for_abscissa(cls, abscissa, **kwargs):
        return cls(gamma=abscissa + 0.5, **kwargs)

    @property
    def nodes(self):
        omega = np.linspace(-self.height, self.height, self.n_nodes)
        return self.gamma + 1j * omega


def laplace_forward(f, s):
    """Laplace transform of grid samples, truncated at the end of the grid.

    Uses the trapezoid rule with fourth-order endpoint corrections.  ``s`` may
    be a scalar or an array.  A :class:`TruncationWarning` is issued when the
    samples have not decayed below ``TAIL_THRESHOLD`` (relative) at x_max.
    """
    values = np.asarray(f.values)
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("grid function has non-finite samples")
    s_arr = np.asarray(s, dtype=complex)
    if np.any(s_arr.real < 0):
        raise InvalidInputError("forward transform requires Re(s) >= 0")
    scale = np.max(np.abs(values)) if values.size else 0.0
    if scale > 0 and np.max(np.abs(values[-4:])) > TAIL_THRESHOLD * scale:
        warnings.warn(
            f"samples at x_max={f.x_max} exceed the tail threshold; transform is truncated",
            TruncationWarning,
            stacklevel=2,
        )
    w = corrected_trapezoid_weights(f.n, f.h) * values
    x = f.x
    flat = s_arr.reshape(-1)

    def block(sl):
        return np.exp(-np.outer(flat[sl], x)) @ w

    out = np.concatenate(chunked_map(block, flat.size, max(1, 2**22 // f.n)))
    return out.reshape(s_arr.shape)[()] if s_arr.ndim else complex(out[0])


def _tail_coefficients(F, z):
    """Fit F(s) ~ c1/s + c2/s^2 from F at z and at the midpoint height."""
    z_mid = z.real + 0.5j * z.imag
    fa = complex(np.asarray(F(np.array([z])))[0])
    fb = complex(np.asarray(F(np.array([z_mid])))[0])
    c1 = (fa * z * z - fb * z_mid * z_mid) / (z - z_mid)
    c2 = fa * z * z - c1 * z
    return c1, c2


def _tail_integrals(contour, F, x):
    """Contribution of |Im s| > height assuming the fitted 1/s, 1/s^2 tails."""
    z_up = contour.gamma + 1j * contour.height
    z_lo = np.conj(z_up)
    c1u, c2u = _tail_coefficients(F, z_up)
    c1l, c2l = _tail_coefficients(F, z_lo)
    out = np.zeros(x.shape, dtype=complex)
    pos = x > 0
    if np.any(pos):
        xp = x[pos]
        e_up = exp1(-z_up * xp)
        e_lo = exp1(-z_lo * xp)
        upper = c1u * e_up + c2u * (np.exp(z_up * xp) / z_up + xp * e_up)
        lower = -c1l * e_lo + c2l * (-np.exp(z_lo * xp) / z_lo - xp * e_lo)
        out[pos] = (upper + lower) / (2j * np.pi)
    if np.any(~pos):
        # At x = 0 only the symmetric (principal value) combination converges.
        c1 = 0.5 * (c1u + c1l)
        t1 = np.arctan2(contour.gamma, contour.height) / np.pi
        t2 = (1.0 / z_up - 1.0 / z_lo) / (2j * np.pi)
        out[~pos] = c1 * t1 + 0.5 * (c2u + c2l) * t2
    return out


def laplace_inverse(F, contour, x, *, abscissa=None, imag_rtol=IMAG_RTOL):
    """Invert a Laplace transform by trapezoid quadrature on a Bromwich line.

    ``F`` must accept an array of complex frequencies.  ``x`` may be a scalar
    or an array of non-negative points.  At x = 0 the contour integral
    converges to the midpoint of the jump from f(0-) = 0; the right limit
    f(0+) (twice that midpoint) is returned, since all transforms handled
    here are of functions supported on [0, inf).

    The imaginary part of the quadrature must be below ``imag_rtol`` relative
    to the magnitude of the summed terms, otherwise :class:`ContourError`.
    """
    if abscissa is not None and contour.gamma <= abscissa:
        raise ContourError(f"contour gamma={contour.gamma} must exceed abscissa {abscissa}")
    x_arr = np.asarray(x, dtype=float)
    xs = np.atleast_1d(x_arr).reshape(-1)
    if np.any(xs < 0):
        raise InvalidInputError("inverse transform is evaluated at x >= 0 only")
    s = contour.nodes
    d_omega = 2.0 * contour.height / (contour.n_nodes - 1)
    weights = np.full(s.size, d_omega / (2.0 * np.pi))
    weights[0] *= 0.5
    weights[-1] *= 0.5
    fs = np.asarray(F(s), dtype=complex)
    if fs.shape != s.shape:
        fs = np.broadcast_to(fs, s.shape)
    if not np.all(np.isfinite(fs)):
        raise ContourError("transform is not finite on the contour; gamma is too small")
    wf = weights * fs

    def block(sl):
        kern = np.exp(np.outer(xs[sl], s))
        return kern @ wf, np.abs(kern) @ np.abs(wf)

    parts = chunked_map(block, xs.size, max(1, 2**22 // s.size))
    total = np.concatenate([p[0] for p in parts])
    magnitude = np.concatenate([p[1] for p in parts])
    if contour.tail_correction and np.any(fs != 0):
        total = total + _tail_integrals(contour, F, xs)
    residual = np.abs(total.imag)
    limit = imag_rtol * np.maximum(np.abs(total.real), magnitude) + 1e-300
    if np.any(residual > limit):
        worst = int(np.argmax(residual / limit))
        raise ContourError(
            f"imaginary residual {residual[worst]:.3e} at x={xs[worst]} exceeds tolerance; "
            "check that gamma lies right of every singularity"
        )
    real = np.where(xs == 0.0, 2.0 * total.real, total.real)
    return real.reshape(x_arr.shape)[()] if x_arr.ndim else float(real[0])


def ivt_limit(
    F,
    ell,
    known_lower_derivatives=(),
    ray_angle=0.0,
    *,
    imaginary_axis_ok=False,
    r0=8.0,
    n_levels=16,
    tol=1e-10,
):
    """Estimate f^(ell)(0+) from the transform via the initial value theorem.

    Evaluates s^(ell+1) F(s) - sum_j s^(ell-j) f^(j)(0-) at s = R exp(i ray_angle)
    for R = r0 * 2^k and extrapolates R -> inf with a Richardson table in 1/R.
    Rays on or beyond the imaginary axis need ``imaginary_axis_ok=True``.
    """
    if ell < 0:
        raise InvalidInputError("ell must be non-negative")
    lower = list(known_lower_derivatives)
    if len(lower) not in (0, ell):
        raise InvalidInputError("known_lower_derivatives must list f^(j)(0-) for j < ell")
    lower = lower or [0.0] * ell
    if abs(ray_angle) >= np.pi / 2 - 1e-12 and not imaginary_axis_ok:
        raise InvalidInputError("ray must lie strictly inside the right half-plane")
    direction = np.exp(1j * ray_angle)
    radii = r0 * 2.0 ** np.arange(n_levels)
    s = radii * direction
    fs = np.asarray(F(s), dtype=complex)
    seq = s ** (ell + 1) * fs
    for j, d in enumerate(lower):
        seq = seq - s ** (ell - j) * d
    diag = np.array(richardson_table(seq, ratio=2.0, max_order=4))
    diffs = np.abs(np.diff(diag))
    scale = np.maximum(1.0, np.abs(diag[1:]))
    converged = np.nonzero(diffs <= tol * scale)[0]
    if converged.size:
        return float(diag[converged[0] + 1].real)
    tail = diffs[-4:]
    if np.all(np.isfinite(tail)) and tail[-1] <= 1e-7 * scale[-1] and tail[-1] <= tail[0]:
        return float(diag[-1].real)
    raise LimitError(f"initial-value extrapolation did not settle (last changes {tail})")


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients on the torus [-pi, pi)^2.

    ``coeffs[i, j]`` is the coefficient of exp(i(k x + kappa y)) with
    k = i - n/2 and kappa = j - n/2, so both indices run over
    {-n/2, ..., n/2 - 1}.
    """

    coeffs: np.ndarray
    real_field: bool = field(default=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise InvalidInputError(f"coefficients must form a square array, got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @property
    def n_modes(self):
        return self.coeffs.shape[0]

    @property
    def wavenumbers(self):
        return wavenumbers(self.n_modes)

    def conjugate_symmetry_error(self):
        """max |c(-k,-kappa) - conj c(k,kappa)| over pairs inside the truncation."""
        n = self.n_modes
        idx = (n - np.arange(n)) % n
        mirrored = self.coeffs[np.ix_(idx, idx)]
        inner = slice(1, None)
        return float(np.max(np.abs(mirrored[inner, inner] - np.conj(self.coeffs[inner, inner]))))


def wavenumbers(n):
    """Integer wavenumbers -n/2 .. n/2-1 in coefficient-index order."""
    return np.arange(-(n // 2), n - n // 2)


def torus_grid(n):
    """Grid points x_j = -pi + 2 pi j / n, j = 0..n-1."""
    return -np.pi + 2.0 * np.pi * np.arange(n) / n


def _check_side(n):
    if n < 1 or n & (n - 1):
        raise InvalidInputError(f"side length must be a power of two, got {n}")


def dft_2d(values):
    """Fourier coefficients of samples on ``torus_grid(n) x torus_grid(n)``."""
    arr = np.asarray(values)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidInputError(f"field must be square, got shape {arr.shape}")
    n = arr.shape[0]
    _check_side(n)
    coeffs = np.fft.fftshift(np.fft.fft2(arr, norm="forward"))
    # grid starts at -pi, which multiplies each mode by exp(i k pi) = (-1)^k
    sign = (-1.0) ** wavenumbers(n)
    coeffs = coeffs * sign[:, None] * sign[None, :]
    return SpectralField(coeffs, real_field=bool(np.isrealobj(arr)))


def idft_2d(field):
    """Inverse of :func:`dft_2d`: samples of sum c(k,kappa) exp(i(kx + kappa y))."""
    n = field.n_modes
    _check_side(n)
    sign = (-1.0) ** wavenumbers(n)
    coeffs = field.coeffs * sign[:, None] * sign[None, :]
    return np.fft.ifft2(np.fft.ifftshift(coeffs), norm="forward")
