import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from grassflow.errors import InvalidInputError
from grassflow.grassmann import (
    GrassmannState,
    LinearCoefficients,
    Normalization,
    evolve_closed_form,
    evolve_coupled,
    reciprocal_monitor,
    riccati_residual,
)
from grassflow.models import CoarseningInput, coarsening_coefficients, coarsening_g1_hat, coarsening_state


def constant_kernel_coefficients(M0):
    return LinearCoefficients(
        p_coeff=lambda s, tau: -2.0 * M0 / (2.0 + tau * M0) + 0.0 * s,
        q_source=lambda s, tau: -0.5 + 0.0 * s * tau,
    )


def g0_hat(M0=1.0):
    return lambda s: M0 / (np.asarray(s, dtype=complex) + 1.0)


def rk4_riccati(rhs, g0, t, n=4000):
    """Scalar RK4 oracle for dg/dt = rhs(g, t)."""
    g, dt = complex(g0), t / n
    for i in range(n):
        tt = i * dt
        k1 = rhs(g, tt)
        k2 = rhs(g + 0.5 * dt * k1, tt + 0.5 * dt)
        k3 = rhs(g + 0.5 * dt * k2, tt + 0.5 * dt)
        k4 = rhs(g + dt * k3, tt + dt)
        g += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return g


def test_initial_state_is_data():
    s = np.array([0.0, 1.0, 2.0 + 1j])
    state = evolve_closed_form(constant_kernel_coefficients(1.0), g0_hat(), s, 0.0)
    assert np.all(state.q_hat == 0)
    assert np.array_equal(state.p_hat, g0_hat()(s))
    assert np.array_equal(state.g_hat, g0_hat()(s))
    assert np.all(state.valid)


@pytest.mark.parametrize("M0, t", [(1.0, 0.5), (1.0, 2.0), (3.0, 1.5)])
def test_constant_kernel_total_clusters(M0, t):
    state = evolve_closed_form(constant_kernel_coefficients(M0), g0_hat(M0), [0.0], t)
    assert abs(state.g_hat[0] - 2 * M0 / (2 + t * M0)) <= 1e-8


def test_constant_kernel_value_one_sixth():
    # hand arithmetic: g0(1) = 1/2, 4 (1/2) / ((2 + 2)(2 + 2 - 1)) = 1/6
    state = evolve_closed_form(constant_kernel_coefficients(1.0), g0_hat(), [1.0], 2.0)
    assert abs(state.g_hat[0] - 1.0 / 6.0) <= 1e-10


def test_constant_kernel_against_ode_oracle():
    M = lambda t: 2.0 / (2.0 + t)  # noqa: E731
    s = 0.7 + 0.4j
    oracle = rk4_riccati(lambda g, t: 0.5 * g * g - M(t) * g, g0_hat()(s), 2.0)
    state = evolve_closed_form(constant_kernel_coefficients(1.0), g0_hat(), [s], 2.0)
    assert abs(state.g_hat[0] - oracle) <= 1e-10


def test_closed_form_matches_coupled_integrator():
    coeffs = LinearCoefficients(
        p_coeff=lambda s, tau: -np.cos(tau) * (1 + 0.1 * s),
        q_source=lambda s, tau: -0.3 + 0.1 * np.sin(tau) + 0.0 * s,
        p_const=lambda s: -0.5 * s,
    )
    s = np.array([0.0, 0.5, 2.0 + 1j])
    closed = evolve_closed_form(coeffs, g0_hat(), s, 1.5, 512)
    coupled = evolve_coupled(coeffs, 0.0, g0_hat()(s), s, 1.5, 2**12, normalization=Normalization.ONE_PLUS_Q)
    assert np.max(np.abs(closed.q_hat - coupled.q_hat)) <= 1e-8
    assert np.max(np.abs(closed.p_hat - coupled.p_hat)) <= 1e-8


def test_coupled_coarsening_matches_closed_form():
    inp = CoarseningInput(h=lambda tau: np.exp(-np.asarray(tau, dtype=float)))
    s = np.array([0.5, 1.0, 2.0])
    g1 = coarsening_g1_hat(inp, s)
    coupled = evolve_coupled(coarsening_coefficients(inp), np.ones(3), g1, s, 2.0, 2000, t0=1.0)
    closed = coarsening_state(inp, s, 2.0)
    assert np.max(np.abs(coupled.q_hat - closed.q_hat)) <= 1e-8
    assert np.max(np.abs(coupled.p_hat - closed.p_hat)) <= 1e-8


def test_coupled_zero_coefficients_frozen():
    zero = LinearCoefficients(lambda s, t: 0.0, lambda s, t: 0.0)
    s = np.array([0.5, 1.0])
    state = evolve_coupled(zero, [1.0, 2.0], [3.0, 4.0], s, 2.0, 10)
    assert np.array_equal(state.q_hat, [1.0, 2.0])
    assert np.array_equal(state.p_hat, [3.0, 4.0])


def test_coupled_zero_trace_keeps_data():
    inp = CoarseningInput(h=lambda tau: 0.0 * np.asarray(tau, dtype=float), g1_hat=lambda s: 0.3 / (s + 1.0))
    s = np.array([0.5, 1.0])
    state = evolve_coupled(coarsening_coefficients(inp), np.ones(2), coarsening_g1_hat(inp, s), s, 3.0, 20)
    assert np.allclose(state.g_hat, 0.3 / (s + 1.0), rtol=0, atol=0)


def test_closed_form_preconditions():
    coupled = LinearCoefficients(lambda s, t: 0.0, lambda s, t: 0.0, q_coeff=lambda s, t: 1.0)
    with pytest.raises(InvalidInputError):
        evolve_closed_form(coupled, g0_hat(), [1.0], 1.0)
    with pytest.raises(InvalidInputError):
        evolve_closed_form(constant_kernel_coefficients(1.0), g0_hat(), [1.0], -1.0)
    with pytest.raises(InvalidInputError):
        evolve_closed_form(constant_kernel_coefficients(1.0), g0_hat(), [1.0], 1.0, 3)
    with pytest.raises(InvalidInputError):
        evolve_coupled(coupled, 0.0, 1.0, [1.0], 1.0, 0)


def test_invalid_points_flagged_not_fatal():
    # q_source = -1 with p = 1 gives 1 + q = 1 - t, which vanishes at t = 1
    coeffs = LinearCoefficients(lambda s, t: 0.0 * s, lambda s, t: -1.0 + 0.0 * s)
    state = evolve_closed_form(coeffs, lambda s: np.ones_like(np.asarray(s, dtype=complex)), [0.0, 1.0], 1.0)
    assert not np.any(state.valid)
    assert np.all(np.isnan(state.g_hat))


# ---------------------------------------------------------------- monitor


def test_monitor_initial_state():
    state = evolve_closed_form(constant_kernel_coefficients(1.0), g0_hat(), np.linspace(0, 5, 6), 0.0)
    report = reciprocal_monitor(state)
    assert report.min_abs_one_plus_q == 1.0
    assert report.series_regime and report.ok


def test_monitor_constant_kernel_no_blow_up():
    s = np.linspace(0.0, 20.0, 41)
    state = evolve_closed_form(constant_kernel_coefficients(1.0), g0_hat(), s, 1.0)
    assert reciprocal_monitor(state).min_abs_one_plus_q > 0


def test_monitor_reports_synthetic_pole():
    s = np.array([0.0, 1.0, 2.0])
    q = np.array([0.1, -1.0, 0.2], dtype=complex)
    state = GrassmannState(s, q, np.ones(3, dtype=complex), np.ones(3, dtype=complex), np.ones(3, bool))
    report = reciprocal_monitor(state)
    assert list(report.failing) == [1]
    assert not report.series_regime and not report.ok


def test_monitor_rejects_plain_normalization():
    s = np.array([1.0])
    state = GrassmannState(s, s, s, s, np.ones(1, bool), Normalization.PLAIN_Q)
    with pytest.raises(InvalidInputError):
        reciprocal_monitor(state)


def test_monitor_monotone_onset():
    # series regime holds on an initial time interval and is lost later
    coeffs = LinearCoefficients(lambda s, t: 0.0 * s, lambda s, t: -1.0 + 0.0 * s)
    flags = [
        reciprocal_monitor(evolve_closed_form(coeffs, lambda s: np.full(np.shape(s), 1.0 + 0j), [0.0], t)).series_regime
        for t in np.linspace(0.0, 2.0, 21)
    ]
    first_false = flags.index(False)
    assert first_false > 0 and not any(flags[first_false:])


# ---------------------------------------------------------------- residual and consistency


def test_residual_constant_kernel_closed_form():
    M = lambda t: 2.0 / (2.0 + t)  # noqa: E731

    def g(s, t):
        g0 = 1.0 / (s + 1.0)
        return 4 * g0 / ((2 + t) * (2 + t - t * g0))

    res = riccati_residual(g, lambda s, gg, t: 0.5 * gg * gg - M(t) * gg, 1.0, 0.5, 1e-4)
    assert abs(res) <= 1e-6


def test_residual_zero_solution():
    res = riccati_residual(lambda s, t: 0.0 * s, lambda s, g, t: 0.5 * g * g - 3.0 * g, np.array([1.0, 2.0]), 1.0)
    assert np.all(res == 0)


def test_residual_merger_formula():
    def g(s, t):
        g0 = 1.0 / (s + 1.0)
        return 2 * g0 / (2 - t * g0)

    assert abs(riccati_residual(g, lambda s, gg, t: 0.5 * gg * gg, 0.5, 0.8)) <= 1e-6


@settings(max_examples=30, deadline=None)
@given(
    a=st.floats(-2, 2),
    b=st.floats(-1, 1),
    c=st.floats(-1, 1),
    t=st.floats(0.01, 2.0),
    plain=st.booleans(),
)
def test_consistency_property(a, b, c, t, plain):
    coeffs = LinearCoefficients(
        p_coeff=lambda s, tau: a * np.cos(tau) + 0.0 * s,
        q_source=lambda s, tau: b + c * tau + 0.0 * s,
    )
    norm = Normalization.PLAIN_Q if plain else Normalization.ONE_PLUS_Q
    s = np.array([0.0, 0.5, 1.0 + 2j])
    state = evolve_closed_form(coeffs, g0_hat(), s, t, 64, normalization=norm)
    assert state.consistency_error() <= 1e-10
