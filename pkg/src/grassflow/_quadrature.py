"""Quadrature helpers shared by the solver modules.

All rules act along the last axis of their input and assume uniform spacing.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import InvalidInputError


def thread_count():
    """Worker count from ``GRASSFLOW_THREADS`` (0 or unset means one per CPU)."""
    raw = os.environ.get("GRASSFLOW_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError as exc:
        raise InvalidInputError(f"GRASSFLOW_THREADS must be an integer, got {raw!r}") from exc
    if n < 0:
        raise InvalidInputError("GRASSFLOW_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


def chunked_map(fn, n_items, chunk):
    """Apply ``fn(slice)`` over ``range(n_items)`` in chunks, threaded when allowed.

    NumPy releases the GIL inside large ufunc calls, so threads help for the
    dense exponential sums used by the inverse transforms.
    """
    slices = [slice(i, min(i + chunk, n_items)) for i in range(0, n_items, chunk)]
    workers = min(thread_count(), len(slices))
    if workers <= 1:
        return [fn(sl) for sl in slices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, slices))


def _check_panels(n_panels):
    if n_panels < 2 or n_panels % 2:
        raise InvalidInputError(f"Simpson rule needs an even panel count >= 2, got {n_panels}")


def simpson_weights(n_panels, h):
    """Composite Simpson weights for ``n_panels + 1`` equally spaced nodes."""
    _check_panels(n_panels)
    w = np.ones(n_panels + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def corrected_trapezoid_weights(n, h):
    """Trapezoid weights with fourth-order endpoint corrections.

    Equivalent to the trapezoid rule plus the leading Gregory end terms; the
    rule is exact for cubics and reduces to the plain rule in the interior.
    """
    if n < 2:
        raise InvalidInputError("need at least two nodes")
    if n < 8:
        w = np.ones(n)
        w[0] = w[-1] = 0.5
        return w * h
    w = np.ones(n)
    w[:3] = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0]
    w[-3:] = [23.0 / 24.0, 7.0 / 6.0, 3.0 / 8.0]
    return w * h


def cumulative_integral(f, h):
    """Running integral of samples ``f`` from the first node, fourth-order accurate.

    Interior intervals use the four-point cubic rule
    ``h/24 (-f[i-1] + 13 f[i] + 13 f[i+1] - f[i+2])`` with one-sided variants
    at the ends; fewer than four nodes fall back to the trapezoid rule.
    """
    f = np.asarray(f)
    n = f.shape[-1]
    out = np.zeros(f.shape, dtype=np.result_type(f.dtype, float))
    if n < 2:
        return out
    if n < 4:
        pieces = 0.5 * h * (f[..., 1:] + f[..., :-1])
    else:
        pieces = np.empty(f.shape[:-1] + (n - 1,), dtype=out.dtype)
        pieces[..., 0] = h / 24.0 * (9 * f[..., 0] + 19 * f[..., 1] - 5 * f[..., 2] + f[..., 3])
        pieces[..., -1] = h / 24.0 * (
            f[..., -4] - 5 * f[..., -3] + 19 * f[..., -2] + 9 * f[..., -1]
        )
        if n > 4:
            pieces[..., 1:-1] = h / 24.0 * (
                -f[..., :-3] + 13 * f[..., 1:-2] + 13 * f[..., 2:-1] - f[..., 3:]
            )
    out[..., 1:] = np.cumsum(pieces, axis=-1)
    return out


def _exp_moments(z):
    """Return I_j(z) = int_0^1 exp(z u) u^j du for j = 0, 1, 2 (stable for small z)."""
    z = np.asarray(z, dtype=complex)
    i0 = np.empty_like(z)
    i1 = np.empty_like(z)
    i2 = np.empty_like(z)
    small = np.abs(z) < 2.0
    if np.any(small):
        zs = z[small]
        term = np.ones_like(zs)
        s0 = np.zeros_like(zs)
        s1 = np.zeros_like(zs)
        s2 = np.zeros_like(zs)
        for k in range(40):
            if k:
                term = term * zs / k
            s0 += term / (k + 1)
            s1 += term / (k + 2)
            s2 += term / (k + 3)
        i0[small], i1[small], i2[small] = s0, s1, s2
    big = ~small
    if np.any(big):
        zb = z[big]
        ez = np.exp(zb)
        b0 = (ez - 1.0) / zb
        b1 = (ez - b0) / zb
        b2 = (ez - 2.0 * b1) / zb
        i0[big], i1[big], i2[big] = b0, b1, b2
    return i0, i1, i2


def exponential_simpson(f, h, mu):
    """Integrate ``exp(mu * tau) * f(tau)`` over equally spaced nodes.

    ``f`` holds samples of a smooth factor on ``n_panels + 1`` nodes starting
    at tau = 0 (last axis); ``mu`` broadcasts against the leading axes.  Each
    panel pair uses the quadratic interpolant of ``f`` integrated exactly
    against the exponential (a Filon-type rule), so large or oscillatory
    ``mu`` costs nothing extra.  For ``mu = 0`` this is composite Simpson.
    """
    f = np.asarray(f)
    n_panels = f.shape[-1] - 1
    _check_panels(n_panels)
    mu = np.asarray(mu, dtype=complex)[..., None]
    z = 2.0 * h * mu
    i0, i1, i2 = _exp_moments(z)
    H = 2.0 * h
    # moments of u^j against exp(mu u) on [0, 2h]
    m0 = H * i0
    m1 = H**2 * i1
    m2 = H**3 * i2
    w0 = (m2 - 3 * h * m1 + 2 * h * h * m0) / (2 * h * h)
    w1 = (-m2 + 2 * h * m1) / (h * h)
    w2 = (m2 - h * m1) / (2 * h * h)
    starts = np.arange(0, n_panels, 2) * h
    shift = np.exp(mu * starts)
    f0 = f[..., 0:-1:2]
    f1 = f[..., 1::2]
    f2 = f[..., 2::2]
    return np.sum(shift * (w0 * f0 + w1 * f1 + w2 * f2), axis=-1)


def phi1(z):
    """First exponential quadrature function (e^z - 1)/z with phi1(0) = 1."""
    z = np.asarray(z, dtype=complex if np.iscomplexobj(z) else float)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-3
    zs = z[small]
    out[small] = 1.0 + zs / 2.0 + zs * zs / 6.0 + zs**3 / 24.0 + zs**4 / 120.0
    zb = z[~small]
    out[~small] = np.expm1(zb) / zb
    return out


def gauss_legendre(n, a, b):
    """Nodes and weights of the n-point Gauss-Legendre rule on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def richardson_table(values, ratio=2.0, max_order=6):
    """Diagonal of the Richardson table for a sequence with error series in 1/R."""
    values = list(values)
    table = [values[0]]
    diag = [values[0]]
    for k in range(1, len(values)):
        row = [values[k]]
        for j in range(1, min(k, max_order) + 1):
            factor = ratio**j
            row.append(row[j - 1] + (row[j - 1] - table[j - 1]) / (factor - 1.0))
        table = row
        diag.append(row[-1])
    return diag


__all__ = [
    "thread_count",
    "chunked_map",
    "simpson_weights",
    "corrected_trapezoid_weights",
    "cumulative_integral",
    "exponential_simpson",
    "phi1",
    "gauss_legendre",
    "richardson_table",
]
