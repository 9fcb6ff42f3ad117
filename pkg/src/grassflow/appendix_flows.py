"""Quotient solutions for a nonlinear elliptic system and for nonlocal PDEs
with anisotropic linear diffusion.

Elliptic case: with grad q = b p and div p = d . p, the flux G = p / q solves
div G = d . G - b |G|^2.  q is found from the linear equation
div(grad q / b) = d . (grad q / b) with Dirichlet data.

Anisotropic case (scalar, one space dimension): p solves the linear flow
d/dt p = D_x p with D_x = d(sqrt(-Laplacian)), q(y; t) is a scalar
depending only on y, and g = p / q solves
d/dt g = D_x g - g b(y) g(y, y; t), or, for the odd-degree variant,
d/dt g = D_x g - g F(|g(y, y; t)|^2) with F purely imaginary.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.polynomial import polynomial as npoly

from ._quadrature import gauss_legendre, phi1
from .errors import DomainError, InvalidInputError, InvariantError, PoleError, ProjectionError

DENOM_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# elliptic system
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EllipticProblem:
    """Reduced elliptic problem on the square [0, L]^2 with n x n nodes.

    ``b(x, y)`` is a nonvanishing scalar, ``d(x, y)`` returns the pair
    (d_x, d_y), ``eps(x, y)`` is the positive diffusivity and
    ``boundary_q(x, y)`` gives the Dirichlet data for q (evaluated on the
    boundary nodes only).  All callables take broadcasting arrays.
    """

    length: float
    n: int
    b: object
    d: object
    boundary_q: object
    eps: object = None

    def __post_init__(self):
        if self.n < 5 or not self.length > 0:
            raise InvalidInputError("need n >= 5 nodes and a positive side length")

    @property
    def h(self):
        return self.length / (self.n - 1)

    def nodes(self):
        x = np.linspace(0.0, self.length, self.n)
        return np.meshgrid(x, x, indexing="ij")

    def eps_values(self, x, y):
        if self.eps is None:
            return np.ones(np.broadcast(x, y).shape)
        return np.broadcast_to(np.asarray(self.eps(x, y), dtype=float), np.broadcast(x, y).shape)

    def d_values(self, x, y):
        dx, dy = self.d(x, y)
        shape = np.broadcast(x, y).shape
        return np.broadcast_to(np.asarray(dx, float), shape), np.broadcast_to(np.asarray(dy, float), shape)

    def b_values(self, x, y):
        return np.broadcast_to(np.asarray(self.b(x, y), dtype=float), np.broadcast(x, y).shape)


@dataclass(frozen=True)
class EllipticSolution:
    """Nodal q, p = grad q / b and the flux eps * grad(phi) = p / q."""

    x: np.ndarray
    y: np.ndarray
    q: np.ndarray
    p: np.ndarray
    flux: np.ndarray
    eps: np.ndarray = field(repr=False)

    @property
    def potential_gradient(self):
        return self.flux / self.eps


def _derivative(f, h, axis):
    """Centred differences inside, third-order one-sided differences on the edges.

    The edge rule keeps the truncation error of a centred divergence taken
    next to the boundary at second order.
    """
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - f[:-2]) / (2 * h)
    out[0] = (-11 * f[0] + 18 * f[1] - 9 * f[2] + 2 * f[3]) / (6 * h)
    out[-1] = (11 * f[-1] - 18 * f[-2] + 9 * f[-3] - 2 * f[-4]) / (6 * h)
    return np.moveaxis(out, 0, axis)


def _gradient(f, h):
    return np.array([_derivative(f, h, 0), _derivative(f, h, 1)])


def _divergence(v, h):
    return _derivative(v[0], h, 0) + _derivative(v[1], h, 1)


def _assemble(problem):
    n, h = problem.n, problem.h
    x, y = problem.nodes()
    m = n - 2
    idx = np.arange(m * m).reshape(m, m)
    inv_b = lambda xx, yy: 1.0 / problem.b_values(xx, yy)  # noqa: E731
    xi, yi = x[1:-1, 1:-1], y[1:-1, 1:-1]
    beta_c = inv_b(xi, yi)
    dx, dy = problem.d_values(xi, yi)
    # conservative second-order stencil for div(beta grad q) minus d . beta grad q
    east = inv_b(xi + h / 2, yi) / h**2 - dx * beta_c / (2 * h)
    west = inv_b(xi - h / 2, yi) / h**2 + dx * beta_c / (2 * h)
    north = inv_b(xi, yi + h / 2) / h**2 - dy * beta_c / (2 * h)
    south = inv_b(xi, yi - h / 2) / h**2 + dy * beta_c / (2 * h)
    centre = -(
        inv_b(xi + h / 2, yi) + inv_b(xi - h / 2, yi) + inv_b(xi, yi + h / 2) + inv_b(xi, yi - h / 2)
    ) / h**2

    q_full = np.zeros((n, n))
    boundary = np.ones((n, n), dtype=bool)
    boundary[1:-1, 1:-1] = False
    q_full[boundary] = np.broadcast_to(
        np.asarray(problem.boundary_q(x, y), dtype=float), (n, n)
    )[boundary]
    if not np.all(np.isfinite(q_full)):
        raise InvalidInputError("boundary data must be finite")

    rows, cols, vals = [idx.ravel()], [idx.ravel()], [centre.ravel()]
    rhs = np.zeros((m, m))
    for coeff, di, dj in ((east, 1, 0), (west, -1, 0), (north, 0, 1), (south, 0, -1)):
        ii, jj = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
        ni, nj = ii + di, jj + dj
        inside = (ni >= 0) & (ni < m) & (nj >= 0) & (nj < m)
        rows.append(idx[inside])
        cols.append(idx[ni[inside], nj[inside]])
        vals.append(coeff[inside])
        out = ~inside
        rhs[out] -= coeff[out] * q_full[ni[out] + 1, nj[out] + 1]
    matrix = sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m * m, m * m)
    )
    return x, y, q_full, matrix, rhs.ravel()


def elliptic_solve(problem, denom_floor=DENOM_FLOOR):
    """Solve for q by five-point differences, then form p and the flux p / q."""
    x, y = problem.nodes()
    bvals = problem.b_values(x, y)
    if np.any(np.abs(bvals) <= denom_floor):
        raise DomainError("b must be nonvanishing on the grid")
    eps = problem.eps_values(x, y)
    if np.any(eps <= 0):
        raise DomainError("eps must be positive")
    x, y, q, matrix, rhs = _assemble(problem)
    try:
        interior = spla.splu(matrix).solve(rhs)
    except RuntimeError as exc:
        raise ProjectionError(f"discrete elliptic operator is singular: {exc}") from exc
    if not np.all(np.isfinite(interior)):
        raise ProjectionError("discrete elliptic solve produced non-finite values")
    m = problem.n - 2
    q = q.copy()
    q[1:-1, 1:-1] = interior.reshape(m, m)
    qi = q[1:-1, 1:-1]
    if np.min(np.abs(qi)) <= denom_floor or np.min(qi) * np.max(qi) <= 0:
        raise DomainError("q vanishes on the interior; the quotient p / q is undefined")
    if np.min(np.abs(q)) <= denom_floor:
        raise DomainError("q vanishes on the boundary; the quotient p / q is undefined")
    grad = _gradient(q, problem.h)
    p = grad / bvals
    return EllipticSolution(x=x, y=y, q=q, p=p, flux=p / q, eps=eps)


def elliptic_residual(problem, solution, margin=2):
    """Max-norm residual of div G - d . G + b |G|^2.

    Nodes within ``margin`` of the boundary are skipped: there the nested
    differences would mix one-sided and centred flux derivatives, whose
    error terms do not cancel, and the residual is only first order.
    """
    h = problem.h
    flux = solution.flux
    div = _divergence(flux, h)
    dx, dy = problem.d_values(solution.x, solution.y)
    b = problem.b_values(solution.x, solution.y)
    res = div - (dx * flux[0] + dy * flux[1]) + b * (flux[0] ** 2 + flux[1] ** 2)
    inner = (slice(margin, -margin), slice(margin, -margin))
    return float(np.max(np.abs(res[inner])))


def elliptic_defects(problem, solution):
    """Defects of the three defining relations: grad q = b p, div p = d . p, p = G q."""
    h = problem.h
    grad = _gradient(solution.q, h)
    b = problem.b_values(solution.x, solution.y)
    dx, dy = problem.d_values(solution.x, solution.y)
    p = solution.p
    div_p = _divergence(p, h)
    inner = (slice(1, -1), slice(1, -1))
    return {
        "grad_q": float(np.max(np.abs(grad - b * p))),
        "div_p": float(np.max(np.abs((div_p - dx * p[0] - dy * p[1])[inner]))),
        "riccati": float(np.max(np.abs(p - solution.flux * solution.q))),
    }


def corner_compatible_boundary(b, d, length, seed=0, scale=0.1):
    """Random cubic polynomial Dirichlet data compatible with the PDE at the corners.

    Generic Dirichlet data on a square make q singular (r^2 log r) at the
    corners, which spoils any pointwise residual.  Here the coefficients of
    u^2, u^2 v, v^2, u v^2 (u = x / L, v = y / L) are solved for so that
    Laplacian(q) + (grad(1/b) b - d) . grad q vanishes at all four corners;
    the remaining coefficients are ``scale`` times standard normals.
    """
    rng = np.random.default_rng(seed)
    monomials = [(i, j) for i in range(4) for j in range(4) if i + j <= 3]
    coeffs = {mono: scale * rng.standard_normal() for mono in monomials}
    coeffs[(0, 0)] = 2.0
    unknown = [(2, 0), (2, 1), (0, 2), (1, 2)]
    corners = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]

    def power_derivative(k, z, order):
        if order > k:
            return 0.0
        return math.perm(k, order) * z ** (k - order)

    def corner_operator(mono, corner):
        i, j = mono
        u, v = corner
        x, y = u * length, v * length
        step = 1e-6 * length
        bx = (b(x + step, y) - b(x - step, y)) / (2 * step)
        by = (b(x, y + step) - b(x, y - step)) / (2 * step)
        bc = b(x, y)
        dx, dy = d(np.asarray(x), np.asarray(y))
        # (grad beta) / beta = -(grad b) / b for beta = 1 / b
        cx = -bx / bc - float(dx)
        cy = -by / bc - float(dy)
        qx = power_derivative(i, u, 1) * v**j / length
        qy = u**i * power_derivative(j, v, 1) / length
        lap = (power_derivative(i, u, 2) * v**j + u**i * power_derivative(j, v, 2)) / length**2
        return lap + cx * qx + cy * qy

    matrix = np.array([[corner_operator(m, c) for m in unknown] for c in corners])
    rhs = -np.array([sum(coeffs[m] * corner_operator(m, c) for m in monomials if m not in unknown) for c in corners])
    try:
        solved = np.linalg.solve(matrix, rhs)
    except np.linalg.LinAlgError as exc:
        raise ProjectionError("corner compatibility conditions are degenerate") from exc
    coeffs.update(zip(unknown, solved))

    def boundary_q(x, y):
        u, v = np.asarray(x) / length, np.asarray(y) / length
        return sum(c * u**i * v**j for (i, j), c in coeffs.items())

    return boundary_q


# ---------------------------------------------------------------------------
# anisotropic nonlocal flows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnisotropicProblem:
    """Scalar anisotropic problem in one space dimension.

    ``d_coeffs`` are ascending polynomial coefficients of d(z), applied at
    z = 2 pi |k|.  ``b(y)`` and ``p0_hat(k, y)`` take broadcasting arrays.
    ``f_coeffs`` are the real alpha_m of F(u) = i sum alpha_m u^m.  The
    Fourier integral is replaced by a lattice sum with spacing ``dk``.
    """

    d_coeffs: tuple
    b: object
    p0_hat: object
    f_coeffs: tuple = ()
    dk: float = 0.125

    def __post_init__(self):
        if not self.dk > 0:
            raise InvalidInputError("lattice spacing dk must be positive")
        if np.iscomplexobj(np.asarray(self.f_coeffs)) and np.any(np.imag(self.f_coeffs) != 0):
            raise InvalidInputError("F coefficients must be real so that F is purely imaginary")

    @property
    def period(self):
        return 1.0 / self.dk

    def symbol(self, k):
        return npoly.polyval(2.0 * np.pi * np.abs(k), np.asarray(self.d_coeffs, dtype=complex))

    def lattice(self, k_trunc):
        if k_trunc < 8:
            raise InvalidInputError("k_trunc must be at least 8")
        j = int(np.floor(k_trunc / self.dk + 1e-9))
        k = self.dk * np.arange(-j, j + 1)
        sym = self.symbol(k)
        if np.any(np.abs(sym[k != 0]) == 0):
            raise DomainError("d(2 pi |k|) vanishes at a nonzero lattice frequency")
        return k, sym

    def f_value(self, u):
        return 1j * npoly.polyval(u, np.asarray(self.f_coeffs, dtype=float))


def _modes(problem, y, k_trunc):
    k, sym = problem.lattice(k_trunc)
    y = np.asarray(y, dtype=float)
    amp = np.asarray(problem.p0_hat(k, y[..., None]), dtype=complex)
    return k, sym, np.broadcast_to(amp, y.shape + k.shape)


def linear_part(problem, x, y, t, k_trunc=16):
    """p(x, y; t) as a lattice Fourier sum."""
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    k, sym, amp = _modes(problem, y, k_trunc)
    phase = np.exp(2j * np.pi * k * x[..., None])
    return np.sum(np.exp(sym * t) * amp * phase, axis=-1) * problem.dk


def diagonal_linear_part(problem, y, t, k_trunc=16):
    """p(y, y; t) on the diagonal."""
    return linear_part(problem, y, y, t, k_trunc)


def quadratic_denominator(problem, y, t, k_trunc=16):
    """q(y; t) = 1 + b(y) sum (e^{d t} - 1)/d p0_hat e^{2 pi i k y} dk.

    The weight (e^{d t} - 1)/d is t phi1(d t), which takes its limit t at d = 0.
    """
    y = np.asarray(y, dtype=float)
    k, sym, amp = _modes(problem, y, k_trunc)
    weight = t * phi1(sym * t)
    phase = np.exp(2j * np.pi * k * y[..., None])
    b = np.asarray(problem.b(y), dtype=complex)
    return 1.0 + b * np.sum(weight * amp * phase, axis=-1) * problem.dk


def _quotient(p, q, denom_floor):
    if np.any(np.abs(q) <= denom_floor):
        raise PoleError("q(y; t) vanished; the quotient solution has a pole")
    return p / q


def anisotropic_solution(problem, x, y, t, k_trunc=16, denom_floor=DENOM_FLOOR):
    """g = p / q for the quadratic nonlocal nonlinearity g b(y) g(y, y; t)."""
    if t < 0:
        raise InvalidInputError("t must be non-negative")
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    p = linear_part(problem, x, y, t, k_trunc)
    q = quadratic_denominator(problem, y, t, k_trunc)
    return _quotient(p, q, denom_floor)


def odd_degree_denominator(problem, y, t, k_trunc=16, n_tau=64):
    """q(y; t) = exp(int_0^t F(|p(y, y; tau)|^2) dtau) by Gauss-Legendre in tau."""
    y = np.asarray(y, dtype=float)
    if t == 0 or len(problem.f_coeffs) == 0:
        return np.ones(y.shape, dtype=complex)
    k, sym, amp = _modes(problem, y, k_trunc)
    phase = amp * np.exp(2j * np.pi * k * y[..., None])
    nodes, weights = gauss_legendre(n_tau, 0.0, t)
    integral = np.zeros(y.shape)
    for tau, w in zip(nodes, weights):
        diag = np.sum(np.exp(sym * tau) * phase, axis=-1) * problem.dk
        integral = integral + w * npoly.polyval(np.abs(diag) ** 2, np.asarray(problem.f_coeffs, float))
    return np.exp(1j * integral)


def anisotropic_odd_degree(problem, x, y, t, k_trunc=16, n_tau=64, denom_floor=DENOM_FLOOR):
    """g = p / q with q unimodular, for the nonlinearity g F(|g(y, y; t)|^2)."""
    if t < 0:
        raise InvalidInputError("t must be non-negative")
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    p = linear_part(problem, x, y, t, k_trunc)
    q = odd_degree_denominator(problem, y, t, k_trunc, n_tau)
    defect = float(np.max(np.abs(np.abs(q) - 1.0), initial=0.0))
    if defect > 1e-12:
        raise InvariantError(f"|q| deviates from 1 by {defect:.3e}")
    return _quotient(p, q, denom_floor)


def anisotropic_residual(problem, y, t, k_trunc=16, *, odd_degree=False, dt=1e-4, n_x=512):
    """Max residual of the target PDE at fixed y, over one x period.

    d/dt g by centred differences, D_x by FFT of g sampled on the period,
    and the nonlocal term from g(y, y; t) evaluated directly.
    """
    solve = anisotropic_odd_degree if odd_degree else anisotropic_solution
    period = problem.period
    x = -period / 2 + period * np.arange(n_x) / n_x
    y = float(y)
    g = solve(problem, x, np.full(n_x, y), t, k_trunc)
    dgdt = (
        solve(problem, x, np.full(n_x, y), t + dt, k_trunc)
        - solve(problem, x, np.full(n_x, y), t - dt, k_trunc)
    ) / (2 * dt)
    freq = np.fft.fftfreq(n_x, d=period / n_x)
    dxg = np.fft.ifft(problem.symbol(freq) * np.fft.fft(g))
    g_diag = complex(solve(problem, np.array([y]), np.array([y]), t, k_trunc)[0])
    if odd_degree:
        nonlinear = g * problem.f_value(abs(g_diag) ** 2)
    else:
        nonlinear = g * complex(np.asarray(problem.b(np.array(y)))) * g_diag
    return float(np.max(np.abs(dgdt - dxg + nonlinear)))
