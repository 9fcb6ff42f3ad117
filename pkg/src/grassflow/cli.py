"""Config-driven experiment runner.

``grassflow list`` prints the experiment table (TSV).  ``grassflow run NAME``
executes one experiment and writes ``manifest.json``, result CSVs and a
``checks.json`` of invariant outcomes into the output directory.  The exit
status is 0 when every check passes, 1 when a check fails and 2 for
configuration errors.

Configuration is a flat ``key = value`` file (``--config``) overridden by
``--key value`` flags.  Values parse as int, then float, then string; lists
are comma-separated.
"""

import argparse
import json
import math
import os
import re
import sys
import warnings
from dataclasses import dataclass

import numpy as np

from . import __version__
from .errors import GrassflowError

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2

_INT = re.compile(r"^[+-]?\d+$")
_FLOAT = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$|^[+-]?(inf|nan)$")


class ConfigError(Exception):
    """Malformed configuration: unknown key, bad value or unreadable file."""


def parse_value(text):
    text = text.strip()
    if _INT.match(text):
        return int(text)
    if _FLOAT.match(text):
        return float(text)
    return text


def parse_config_text(text):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {number}: empty key")
        out[key] = parse_value(value)
    return out


def _floats(value):
    if isinstance(value, str):
        try:
            return [float(v) for v in value.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"expected a comma-separated list of numbers, got {value!r}") from exc
    return [float(value)]


# ---------------------------------------------------------------- output helpers


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return "%.17g" % float(v)


def write_csv(path, header, rows):
    """Comma-separated, header row, LF endings, %.17g floats."""
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _check(name, value, tolerance, passed=None, detail=None):
    value = float(value) if value is not None else None
    if passed is None:
        passed = value is not None and math.isfinite(value) and value <= tolerance
    out = {"name": name, "passed": bool(passed), "value": value, "tolerance": tolerance}
    if detail is not None:
        out["detail"] = detail
    return out


def _rel_max(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def _ghat_rows(s_values, t, g_values):
    return [(complex(s).real, complex(s).imag, t, complex(g).real, complex(g).imag) for s, g in zip(s_values, g_values)]


GHAT_HEADER = ["s_re", "s_im", "t", "g_re", "g_im"]


# ---------------------------------------------------------------- experiments


def _run_constant_kernel(p, seed, out):
    from .grassmann import riccati_residual
    from .smoluchowski import GeneralModelParams, constant_kernel_ghat, general_ghat, total_clusters_constant_kernel

    M0, t, rate = float(p["M0"]), float(p["t"]), float(p["rate"])
    s = np.array(_floats(p["s"]))

    def g0_hat(z):
        return M0 * rate / (np.asarray(z, dtype=complex) + rate)

    g = np.atleast_1d(constant_kernel_ghat(g0_hat, M0, s, t))
    write_csv(os.path.join(out, "ghat.csv"), GHAT_HEADER, _ghat_rows(s, t, g))

    def rhs(ss, gg, tt):
        return 0.5 * gg * gg - total_clusters_constant_kernel(M0, tt) * gg

    checks = []
    if t > 1e-3:
        res = riccati_residual(lambda ss, tt: constant_kernel_ghat(g0_hat, M0, ss, tt), rhs, s, t, 1e-4)
        checks.append(_check("riccati_residual", np.max(np.abs(res)), 1e-6))
    engine = general_ghat(GeneralModelParams(D0=1e-8, B0=0.5), g0_hat, None, s.astype(complex), t)
    checks.append(_check("engine_vs_closed_form_rel", _rel_max(engine, g), 1e-6))
    return checks


def _general_params(p):
    from .smoluchowski import GeneralModelParams

    a_amp, b0_amp = float(p["a_amp"]), float(p["b0_amp"])
    return GeneralModelParams(
        D0=float(p["D0"]),
        d0=float(p["d0"]),
        n=int(p["n"]),
        B0=float(p["B0"]),
        beta=float(p["beta"]),
        m=int(p["m"]),
        a=lambda x, t=0.0: a_amp * np.exp(-np.asarray(x, float)),
        a_hat=lambda s, t=0.0: a_amp / (np.asarray(s, dtype=complex) + 1.0) + 0.0 * np.asarray(t),
        b0=lambda x: b0_amp * np.exp(-2.0 * np.asarray(x, float)),
        b0_hat=lambda s: b0_amp / (np.asarray(s, dtype=complex) + 2.0),
    )


def _run_general_smoluchowski(p, seed, out):
    from .grassmann import riccati_residual
    from .smoluchowski import (
        TotalClusters,
        general_g_physical,
        general_ghat,
        general_riccati_rhs,
        oracle_integrate,
        windowed_exponential,
    )

    params = _general_params(p)
    t = float(p["t"])
    data = windowed_exponential(int(p["bc_order"]), float(p["x_max"]), int(p["n_grid"]))
    s = np.array(_floats(p["s"]), dtype=complex)
    M_fn = TotalClusters(params, data.M0)
    g_hat = general_ghat(params, data.g0_hat, M_fn, s, t)
    write_csv(os.path.join(out, "ghat.csv"), GHAT_HEADER, _ghat_rows(s, t, np.atleast_1d(g_hat)))
    checks = []
    if t > 1e-3:
        res = riccati_residual(
            lambda ss, tt: general_ghat(params, data.g0_hat, M_fn, ss, tt), general_riccati_rhs(params, M_fn), s, t
        )
        checks.append(_check("riccati_residual", np.max(np.abs(res)), 1e-5))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        physical = general_g_physical(params, data, t, check_boundary=False)
    oracle = oracle_integrate(params, data, t)
    write_csv(
        os.path.join(out, "g.csv"),
        ["x", "t", "g_grassmann", "g_oracle"],
        [(x, t, a, b) for x, a, b in zip(data.g0.x, physical.values, oracle.values)],
    )
    rel = float(np.linalg.norm(physical.values - oracle.values) / np.linalg.norm(oracle.values))
    checks.append(_check("physical_vs_oracle_rel_l2", rel, 1e-3))
    return checks


def _run_coarsening(p, seed, out):
    from .grassmann import riccati_residual
    from .models import CoarseningInput, coarsening_coupled, coarsening_ghat, coarsening_riccati_rhs, coarsening_state

    rate, t = float(p["h_rate"]), float(p["t"])
    inp = CoarseningInput(h=lambda tau: np.exp(-rate * np.asarray(tau, dtype=float)), tau_max=float(p["tau_max"]))
    s = np.array(_floats(p["s"]), dtype=complex)
    g = np.atleast_1d(coarsening_ghat(inp, s, t))
    write_csv(os.path.join(out, "ghat.csv"), GHAT_HEADER, _ghat_rows(s, t, g))
    closed = coarsening_state(inp, s, t)
    coupled = coarsening_coupled(inp, s, t)
    gap = max(_rel_max(coupled.q_hat, closed.q_hat), _rel_max(coupled.p_hat, closed.p_hat))
    checks = [_check("coupled_vs_closed_form", gap, 1e-8)]
    if t - 1.0 > 1e-3:
        res = riccati_residual(lambda ss, tt: coarsening_ghat(inp, ss, tt), coarsening_riccati_rhs(inp), s, t)
        checks.append(_check("riccati_residual", np.max(np.abs(res)), 1e-6))
    return checks


def _run_depinning(p, seed, out):
    from .errors import BlowUpError
    from .models import DepinningParams, DepinningPhase, depinning_q_crossing, depinning_trajectory

    params = DepinningParams(float(p["a0"]), float(p["B0"]), float(p["R0"]), float(p["D0_init"]))
    t_end, n_t = float(p["t_end"]), int(p["n_t"])
    times = np.linspace(0.0, t_end, n_t + 1)
    blow_up = None
    try:
        R, D = depinning_trajectory(params, times)
    except BlowUpError as exc:
        blow_up = exc.blow_up_time
        times = times[times < exc.bracket[0]]
        if times.size > 1:
            R, D = depinning_trajectory(params, times)
        else:
            R, D = np.array([params.R0]), np.array([params.D0_init])
    write_csv(os.path.join(out, "trajectory.csv"), ["t", "R", "D"], zip(times, R, D))
    drift = np.abs(params.a0 * D**2 - 2 * params.B0 * R - params.invariant)
    scale = np.maximum(params.a0 * D**2 + 2 * params.B0 * np.abs(R), params.a0 * params.D0_init**2 + 2 * params.B0 * params.R0)
    checks = [_check("invariant_drift_rel", np.max(drift / scale), 1e-8, detail=params.phase.value)]
    if params.phase is DepinningPhase.PINNED:
        analytic = params.pinned_divergence_time()
        if blow_up is None:
            checks.append(_check("pinned_divergence_detected", None, 0.0, passed=analytic > t_end, detail="t_end before blow-up"))
        else:
            checks.append(_check("divergence_time_rel", abs(blow_up - analytic) / analytic, 1e-4))
        crossing = depinning_q_crossing(params, lambda z: 1.0 / (np.asarray(z, dtype=complex) + 2.0) ** 2, 0.0, min(t_end, 0.999 * analytic))
        checks.append(_check("q_crossing_time", crossing, math.inf, passed=True, detail="none" if crossing is None else repr(crossing)))
    else:
        checks.append(_check("R_decays", float(R[-1]), float(params.R0), passed=float(R[-1]) < params.R0))
    return checks


def _run_mergers(p, seed, out):
    from .models import merger_evolve, merger_phi_from_psi

    psi_name, t = p["psi"], float(p["t"])
    psis = {"quadratic": lambda g: -0.5 * g * g, "cubic": lambda g: -(g**3)}
    if psi_name not in psis:
        raise ConfigError(f"psi must be one of {sorted(psis)}")
    mech = merger_phi_from_psi(psis[psi_name])
    s = np.array(_floats(p["s"]))

    def g0_hat(z):
        return 1.0 / (np.asarray(z) + 1.0)

    g = np.atleast_1d(merger_evolve(mech, g0_hat, s, t))
    write_csv(os.path.join(out, "ghat.csv"), GHAT_HEADER, _ghat_rows(s, t, g))
    g0 = g0_hat(s)
    exact = 2 * g0 / (2 - t * g0) if psi_name == "quadratic" else 1.0 / np.sqrt(1.0 / g0**2 - 2 * t)
    dt = 1e-4
    checks = [_check("closed_form_rel", _rel_max(g, exact), 1e-10)]
    if t > dt:
        plus = merger_evolve(mech, g0_hat, s, t + dt, check_dt=math.inf)
        minus = merger_evolve(mech, g0_hat, s, t - dt, check_dt=math.inf)
        res = (np.atleast_1d(plus) - np.atleast_1d(minus)) / (2 * dt) + psis[psi_name](g)
        checks.append(_check("riccati_residual", np.max(np.abs(res)), 1e-6))
    return checks


def _run_strang(p, seed, out):
    from .models import strang_solve
    from .xform import GridFunction1D

    c, D0, t_end, n_steps = float(p["c"]), float(p["D0"]), float(p["t_end"]), int(p["n_steps"])
    state = GridFunction1D.from_function(lambda x: x * np.exp(-x), float(p["x_max"]), int(p["n_grid"]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        runs = [strang_solve(state, c, lambda tt: D0, t_end, n_steps * 2**k).values for k in range(3)]
    write_csv(os.path.join(out, "g.csv"), ["x", "t", "g"], [(x, t_end, v) for x, v in zip(state.x, runs[0])])
    d1 = np.max(np.abs(runs[0] - runs[1]))
    d2 = np.max(np.abs(runs[1] - runs[2]))
    order = math.log2(d1 / d2) if d1 > 0 and d2 > 0 else math.inf
    return [_check("self_convergence_order", order, 1.7, passed=order >= 1.7 or d1 < 1e-13)]


def _run_cole_hopf(p, seed, out):
    from .models import cole_hopf_solve

    nu, t = float(p["nu"]), float(p["t"])
    s = np.linspace(float(p["s_min"]), float(p["s_max"]), int(p["n_s"]))
    sol = cole_hopf_solve(lambda z: np.exp(-np.asarray(z) ** 2), nu, s, t)
    write_csv(os.path.join(out, "ghat.csv"), GHAT_HEADER, _ghat_rows(s, t, sol.g_hat))
    checks = [_check("log_derivative_defect", sol.log_derivative_defect, 1e-5)]
    if t > 1e-3:
        dt, ds = 1e-4, 1e-3
        sub = s[(s > s[0] + 2 * ds) & (s < s[-1] - 2 * ds)]
        g = lambda tt, ss: np.real(cole_hopf_solve(lambda z: np.exp(-np.asarray(z) ** 2), nu, ss, tt).g_hat)  # noqa: E731
        gt = (g(t + dt, sub) - g(t - dt, sub)) / (2 * dt)
        gm, gp, g0 = g(t, sub - ds), g(t, sub + ds), g(t, sub)
        res = gt - nu * (gp - 2 * g0 + gm) / ds**2 - g0 * (gp - gm) / (2 * ds)
        checks.append(_check("burgers_residual", np.max(np.abs(res)), 1e-4))
    return checks


_PI0 = {
    "sin": (np.sin, -1.0),
    "linear": (lambda a: -np.asarray(a, dtype=float), None),
}


def _burgers_problem(name):
    from .graphflow import GraphFlowProblem

    if name not in _PI0:
        raise ConfigError(f"pi0 must be one of {sorted(_PI0)}")
    return GraphFlowProblem(pi0=_PI0[name][0])


def _run_burgers(p, seed, out):
    from .graphflow import riccati_subflow, shock_time, solve_many

    problem = _burgers_problem(p["pi0"])
    t = float(p["t"])
    x = np.array(_floats(p["x"]))
    u = np.atleast_1d(solve_many(problem, x, t))
    write_csv(os.path.join(out, "values.csv"), ["x", "t", "u"], [(xi, t, ui) for xi, ui in zip(x, u)])
    residual = np.max(np.abs(u - problem.pi0(x - t * u)))
    checks = [_check("characteristic_residual", residual, 1e-12)]
    t_star = shock_time(problem, (-10.0, 10.0))
    checks.append(_check("before_shock_time", t_star, math.inf, passed=t < t_star, detail=f"t*={t_star!r}"))
    if p["pi0"] == "linear":
        sub = riccati_subflow(np.array([[-1.0]]), t)
        checks.append(_check("riccati_subflow_rel", _rel_max(u, sub * x), 1e-10))
    return checks


def _run_stochastic_burgers(p, seed, out):
    from .graphflow import solve_at, stochastic_burgers_ensemble

    problem = _burgers_problem(p["pi0"])
    nu, x, t = float(p["nu"]), float(p["x"]), float(p["t"])
    n_steps, n_real = int(p["n_steps"]), int(p["n_realizations"])
    values = stochastic_burgers_ensemble(problem, nu, x, t, n_steps, n_real, seed)
    write_csv(os.path.join(out, "realizations.csv"), ["realization", "u"], enumerate(values))
    again = stochastic_burgers_ensemble(problem, nu, x, t, n_steps, n_real, seed)
    inviscid = stochastic_burgers_ensemble(problem, 0.0, x, t, n_steps, min(n_real, 4), seed)
    exact = solve_at(problem, x, t)
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(n_real)) if n_real > 1 else math.nan
    return [
        _check("rerun_bit_identical", float(np.max(np.abs(values - again))), 0.0),
        _check("zero_viscosity_reduction", float(np.max(np.abs(inviscid - exact))), 1e-14),
        _check("ensemble_mean", mean, math.inf, passed=True, detail=f"standard_error={se!r}"),
    ]


def _run_spde_compare(p, seed, out):
    from .spde import SpdeParams, run_comparison

    params = SpdeParams(
        alpha=float(p["alpha"]),
        gamma=float(p["gamma"]),
        epsilon=float(p["epsilon"]),
        T=float(p["T"]),
        n_steps=int(p["n_steps"]),
        n_modes=int(p["n_modes"]),
        noise_amp=float(p["noise_amp"]),
        ito_correction=str(p["ito_correction"]),
    )
    report = run_comparison(params, seed)
    report.write(out)
    again = run_comparison(params, seed)
    finer = run_comparison(SpdeParams(**{**params.__dict__, "n_steps": 2 * params.n_steps}), seed)
    return [
        _check("rel_l2_gap", report.rel_l2, 0.05),
        _check("gap_decreases_when_steps_double", finer.rel_l2, report.rel_l2, passed=finer.rel_l2 < report.rel_l2),
        _check("rerun_bit_identical", float(np.max(np.abs(report.direct_field - again.direct_field))), 0.0),
    ]


def _run_elliptic(p, seed, out):
    from .appendix_flows import EllipticProblem, corner_compatible_boundary, elliptic_defects, elliptic_residual, elliptic_solve

    length, n = float(p["L"]), int(p["n"])
    dx, dy = float(p["d_x"]), float(p["d_y"])

    def b(x, y):
        return 1.0 + np.asarray(x) ** 2 / 4.0

    def d(x, y):
        return dx + 0.0 * np.asarray(x), dy + 0.0 * np.asarray(y)

    boundary = corner_compatible_boundary(b, d, length, seed, float(p["data_scale"]))
    fine = EllipticProblem(length, n, b, d, boundary)
    coarse = EllipticProblem(length, (n - 1) // 2 + 1, b, d, boundary)
    sol = elliptic_solve(fine)
    rows = zip(sol.x.ravel(), sol.y.ravel(), sol.q.ravel(), sol.flux[0].ravel(), sol.flux[1].ravel())
    write_csv(os.path.join(out, "field.csv"), ["x", "y", "q", "flux_x", "flux_y"], rows)
    r_fine = elliptic_residual(fine, sol)
    r_coarse = elliptic_residual(coarse, elliptic_solve(coarse))
    ratio = r_coarse / r_fine if r_fine > 0 else math.inf
    defects = elliptic_defects(fine, sol)
    return [
        _check("nonlinear_residual", r_fine, 1e-3),
        _check("refinement_ratio", ratio, 3.0, passed=ratio >= 3.0, detail="coarse/fine residual, 4 for O(h^2)"),
        _check("riccati_relation", defects["riccati"], 1e-12),
    ]


def _run_anisotropic(p, seed, out):
    from .appendix_flows import (
        AnisotropicProblem,
        anisotropic_odd_degree,
        anisotropic_residual,
        anisotropic_solution,
        odd_degree_denominator,
    )

    t, k_trunc, alpha = float(p["t"]), float(p["k_trunc"]), float(p["alpha1"])
    ys = np.array(_floats(p["y"]))
    base = dict(
        d_coeffs=(0.0, 0.0, -1.0),
        b=lambda y: np.exp(-np.asarray(y) ** 2),
        p0_hat=lambda k, y: np.exp(-np.asarray(k) ** 2 - np.asarray(y) ** 2),
    )
    quad = AnisotropicProblem(**base)
    odd = AnisotropicProblem(**base, f_coeffs=(0.0, alpha))
    x = np.linspace(-2.0, 2.0, int(p["n_x"]))
    rows = []
    for variant, problem, solve in (("quadratic", quad, anisotropic_solution), ("odd_degree", odd, anisotropic_odd_degree)):
        for y in ys:
            g = solve(problem, x, np.full(x.shape, y), t, k_trunc)
            rows.extend((variant, xi, y, t, gi.real, gi.imag) for xi, gi in zip(x, g))
    write_csv(os.path.join(out, "g.csv"), ["variant", "x", "y", "t", "g_re", "g_im"], rows)
    r_quad = max(anisotropic_residual(quad, y, t, k_trunc) for y in ys)
    r_odd = max(anisotropic_residual(odd, y, t, k_trunc, odd_degree=True) for y in ys)
    unit = float(np.max(np.abs(np.abs(odd_degree_denominator(odd, ys, t, k_trunc)) - 1.0)))
    return [
        _check("quadratic_residual", r_quad, 1e-4),
        _check("odd_degree_residual", r_odd, 1e-4),
        _check("odd_degree_unit_modulus", unit, 1e-12),
    ]


@dataclass(frozen=True)
class Experiment:
    name: str
    anchor: str
    defaults: dict
    runner: object
    outputs: str


EXPERIMENTS = {
    e.name: e
    for e in [
        Experiment(
            "constant_kernel",
            "Example 'Explicit solution: constant kernel case'",
            {"M0": 1.0, "t": 2.0, "s": "0,0.5,1,2,5,10", "rate": 1.0},
            _run_constant_kernel,
            "ghat.csv",
        ),
        Experiment(
            "general_smoluchowski",
            "Corollary 'Explicit solution' (general Smoluchowski-type equation)",
            {
                "D0": 1e-8, "d0": 0.0, "n": 1, "B0": 0.5, "beta": 0.0, "m": 1, "a_amp": 0.0, "b0_amp": 0.0,
                "t": 1.0, "x_max": 40.0, "n_grid": 2048, "bc_order": 1, "s": "0,1,5,10",
            },
            _run_general_smoluchowski,
            "ghat.csv g.csv",
        ),
        Experiment(
            "coarsening",
            "Example 'Coarsening'",
            {"h_rate": 1.0, "t": 2.0, "tau_max": 50.0, "s": "0.5,1,2,5"},
            _run_coarsening,
            "ghat.csv",
        ),
        Experiment(
            "depinning",
            "Example 'Derrida-Retaux depinning model'",
            {"a0": 1.0, "B0": 1.0, "R0": 2.0, "D0_init": 1.0, "t_end": 5.0, "n_t": 500},
            _run_depinning,
            "trajectory.csv",
        ),
        Experiment(
            "mergers",
            "Example 'Multiple mergers'",
            {"psi": "quadratic", "t": 0.7, "s": "0,1,3"},
            _run_mergers,
            "ghat.csv",
        ),
        Experiment(
            "strang",
            "Example 'Lambert-Schertzer Strang splitting'",
            {"c": 1.0, "D0": 1.0, "t_end": 0.5, "n_steps": 8, "x_max": 30.0, "n_grid": 1024},
            _run_strang,
            "g.csv",
        ),
        Experiment(
            "cole_hopf",
            "Example 'Pre-Laplace Burgers / Cole-Hopf'",
            {"nu": 0.1, "t": 0.5, "s_min": -6.0, "s_max": 6.0, "n_s": 121},
            _run_cole_hopf,
            "ghat.csv",
        ),
        Experiment(
            "burgers",
            "Proposition 'Inviscid Burgers' (nonlinear graph flows)",
            {"pi0": "sin", "t": 0.5, "x": "0.3"},
            _run_burgers,
            "values.csv",
        ),
        Experiment(
            "stochastic_burgers",
            "Remark 'Stochastic Burgers equation'",
            {"pi0": "sin", "nu": 0.01, "x": 0.3, "t": 0.5, "n_steps": 64, "n_realizations": 1000},
            _run_stochastic_burgers,
            "realizations.csv",
        ),
        Experiment(
            "spde_compare",
            "Spectral SPDE experiment (direct vs Grassmannian scheme)",
            {
                "alpha": 1.0, "gamma": 10.0, "epsilon": 1000.0, "T": 0.007, "n_steps": 256, "n_modes": 32,
                "noise_amp": 0.001, "ito_correction": "consistent",
            },
            _run_spde_compare,
            "field_direct.csv field_grassmann.csv diagnostics.json",
        ),
        Experiment(
            "elliptic",
            "Prescription 'Nonlinear elliptic system' (reduced case)",
            {"L": 1.0, "n": 257, "d_x": 1.0, "d_y": 0.0, "data_scale": 0.1},
            _run_elliptic,
            "field.csv",
        ),
        Experiment(
            "anisotropic",
            "Prescription 'PDE with anisotropic diffusion' and its odd-degree variant",
            {"t": 0.5, "y": "0,0.3,1", "k_trunc": 16, "alpha1": 1.0, "n_x": 65},
            _run_anisotropic,
            "g.csv",
        ),
    ]
}


def list_experiments():
    """TSV table: header plus one row per experiment."""
    lines = ["experiment\tparameters\tdefaults\toutputs\tanchor"]
    for e in EXPERIMENTS.values():
        keys = ",".join(e.defaults)
        defaults = ";".join(f"{k}={_fmt(v) if not isinstance(v, str) else v}" for k, v in e.defaults.items())
        lines.append(f"{e.name}\t{keys}\t{defaults}\t{e.outputs}\t{e.anchor}")
    return "\n".join(lines) + "\n"


def _overrides(tokens):
    out = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or len(tok) == 2:
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ConfigError(f"flag --{key} needs a value")
            value = tokens[i + 1]
            i += 2
        out[key] = parse_value(value)
    return out


def resolve_config(experiment, config_text=None, overrides=None):
    """Defaults, then config file entries, then flags; unknown keys rejected."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {sorted(EXPERIMENTS)}")
    params = dict(EXPERIMENTS[experiment].defaults)
    seed, out_dir = 0, None
    merged = {}
    if config_text is not None:
        merged.update(parse_config_text(config_text))
    merged.update(overrides or {})
    if "experiment" in merged and merged.pop("experiment") != experiment:
        raise ConfigError("config names a different experiment")
    if "seed" in merged:
        seed = merged.pop("seed")
        if not isinstance(seed, int):
            raise ConfigError("seed must be an integer")
    if "output_dir" in merged:
        out_dir = str(merged.pop("output_dir"))
    unknown = sorted(set(merged) - set(params))
    if unknown:
        raise ConfigError(f"unknown parameter(s) for {experiment}: {', '.join(unknown)}")
    for key, value in merged.items():
        if isinstance(params[key], (int, float)) and not isinstance(params[key], bool) and isinstance(value, str):
            raise ConfigError(f"parameter {key} expects a number, got {value!r}")
        params[key] = value
    return params, seed, out_dir


def run(experiment, params, seed, out_dir):
    """Execute one experiment; returns the exit status."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "experiment": experiment,
        "params": params,
        "seed": seed,
        "output_dir": out_dir,
        "artifact_version": __version__,
        "threads": os.environ.get("GRASSFLOW_THREADS", "0"),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    try:
        checks = EXPERIMENTS[experiment].runner(params, seed, out_dir)
    except (GrassflowError, ValueError, ArithmeticError) as exc:
        checks = [_check("experiment_completed", None, 0.0, passed=False, detail=f"{type(exc).__name__}: {exc}")]
    with open(os.path.join(out_dir, "checks.json"), "w") as fh:
        json.dump({"all_passed": all(c["passed"] for c in checks), "checks": checks}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for c in checks:
        status = "PASS" if c["passed"] else "FAIL"
        print(f"{status}\t{c['name']}\t{c['value']!r}\t{c['tolerance']!r}")
    return EXIT_OK if all(c["passed"] for c in checks) else EXIT_CHECK_FAILED


def build_parser():
    parser = argparse.ArgumentParser(
        prog="grassflow", description="Riccati / Grassmannian flow experiments", allow_abbrev=False
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run one experiment", allow_abbrev=False)
    run_p.add_argument("experiment")
    run_p.add_argument("--config", help="flat key = value file")
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--out", help="output directory (default results/<experiment>)")
    sub.add_parser("list", help="list experiments as TSV")
    return parser


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG_ERROR if exc.code else EXIT_OK
    if args.command == "list":
        if extra:
            print(f"unexpected arguments: {extra}", file=sys.stderr)
            return EXIT_CONFIG_ERROR
        sys.stdout.write(list_experiments())
        return EXIT_OK
    try:
        text = None
        if args.config:
            try:
                with open(args.config) as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
        overrides = _overrides(extra)
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["output_dir"] = args.out
        params, seed, out_dir = resolve_config(args.experiment, text, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    out_dir = out_dir or os.path.join("results", args.experiment)
    try:
        return run(args.experiment, params, seed, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
