import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import cumulative_simpson, solve_ivp

from nmqsim.qcore import (ContractViolation, SystemParams, plus_x_pair,
                          pure_state, trace_distance_series)
from nmqsim.rwa import (IntegratorConfig, phase_epsilon, reduced_state,
                        reduced_states, solve_g, static_g_closed_form,
                        weak_coupling_g, weak_coupling_g1)

STATIC_MATRIX = [(g, d) for g in (0.1, 0.5, 2.0, 10.0) for d in (0.0, 2.0, 8.0)]


def cumulative(y, x):
    return (cumulative_simpson(y.real, x=x, initial=0)
            + 1j * cumulative_simpson(y.imag, x=x, initial=0))


def ivp_reference(p, tau):
    """Independent route: scipy DOP853 on the real 4-vector."""
    def rhs(t, y):
        g = y[0] + 1j * y[1]
        dg = y[2] + 1j * y[3]
        ddg = -(1 - 1j * p.delta * math.cos(p.omega_d * t)) * dg \
            - 0.5 * p.gamma0 * g
        return [dg.real, dg.imag, ddg.real, ddg.imag]
    sol = solve_ivp(rhs, (0, tau[-1]), [1, 0, 0, 0], method="DOP853",
                    t_eval=tau, rtol=1e-12, atol=1e-14)
    return sol.y[0] + 1j * sol.y[1]


# --- solve_g -------------------------------------------------------------

def test_initial_condition_and_zero_coupling():
    tr = solve_g(SystemParams(0.0, 3.0, 2.0))
    assert tr.g[0] == 1 and tr.dg[0] == 0
    assert np.all(tr.g == 1.0)
    assert tr.horizon == pytest.approx(30.0)


def test_underdamped_static_example():
    tr = solve_g(SystemParams(2.0))
    t = tr.tau
    s3 = math.sqrt(3)
    exact = np.exp(-t / 2) * (np.cos(s3 * t / 2) + np.sin(s3 * t / 2) / s3)
    assert np.max(np.abs(tr.g - exact)) < 1e-7


@pytest.mark.parametrize("gamma0,delta", STATIC_MATRIX)
def test_static_closed_form_equivalence(gamma0, delta):
    tr = solve_g(SystemParams(gamma0, delta, 0.0))
    ref = static_g_closed_form(gamma0, delta, tr.tau)
    assert tr.tau[-1] == pytest.approx(30.0)
    assert np.max(np.abs(tr.g - ref)) < 1e-7


@pytest.mark.parametrize("p", [SystemParams(2, 3, 5), SystemParams(0.5, 1, 1),
                               SystemParams(10, 20, 20),
                               SystemParams(0.1, 8, 2)])
def test_driven_matches_scipy(p):
    cfg = IntegratorConfig(tau_max=20.0, adaptive_horizon=False)
    tr = solve_g(p, cfg)
    assert np.max(np.abs(tr.g - ivp_reference(p, tr.tau))) < 1e-7


@pytest.mark.parametrize("p", [SystemParams(2, 3, 5), SystemParams(10, 8, 0),
                               SystemParams(10, 20, 20),
                               SystemParams(0.1, 8, 2)])
def test_ode_residual_on_output(p):
    # integrated form: pointwise differencing of dense output amplifies
    # interpolation error by 1/step and is not a sharp check
    cfg = IntegratorConfig(dtau=0.001, adaptive_horizon=False)
    tr = solve_g(p, cfg)
    t = tr.tau
    drift = (1 - 1j * p.delta * np.cos(p.omega_d * t)) * tr.dg
    rhs = -drift - 0.5 * p.gamma0 * tr.g
    scale = max(1.0, np.max(np.abs(drift)), 0.5 * p.gamma0)
    r_g = np.max(np.abs(tr.g - 1 - cumulative(tr.dg, t)))
    r_dg = np.max(np.abs(tr.dg - cumulative(rhs, t)))
    assert r_g <= 10 * cfg.rtol
    assert r_dg <= 10 * cfg.rtol * scale


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 12), st.floats(0, 20), st.floats(0, 20))
def test_amplitude_is_contractive(gamma0, delta, omega_d):
    tr = solve_g(SystemParams(gamma0, delta, omega_d),
                 IntegratorConfig(tau_max=15.0, adaptive_horizon=False))
    assert np.max(np.abs(tr.g)) <= 1 + 1e-6


def test_adaptive_horizon():
    slow = solve_g(SystemParams(0.05))
    assert slow.horizon > 30.0
    assert abs(slow.g[-1]) < 1e-3 or slow.horizon == pytest.approx(120.0)
    fixed = solve_g(SystemParams(0.05), IntegratorConfig(adaptive_horizon=False))
    assert fixed.horizon == pytest.approx(30.0)
    assert solve_g(SystemParams(0.2)).horizon == pytest.approx(30.0)


def test_config_validation():
    for bad in ({"rtol": 0}, {"atol": -1}, {"dtau": 0}, {"tau_max": -1}):
        with pytest.raises(ContractViolation):
            IntegratorConfig(**bad)


# --- closed form and phase -----------------------------------------------

def test_closed_form_examples():
    t = np.linspace(0, 20, 401)
    assert np.allclose(static_g_closed_form(0.0, 0.0, t), 1.0)
    critical = np.exp(-t / 2) * (1 + t / 2)
    assert np.max(np.abs(static_g_closed_form(0.5, 0.0, t) - critical)) < 1e-14
    near = static_g_closed_form(0.5 - 1e-12, 0.0, t)
    assert np.max(np.abs(near - critical)) < 1e-9


def test_phase_epsilon():
    t = np.linspace(0, 5, 11)
    assert np.allclose(phase_epsilon(SystemParams(1, 0, 3), t), 20 * t)
    assert phase_epsilon(SystemParams(1, 2, 3), 0.0) == 0
    assert np.allclose(phase_epsilon(SystemParams(1, 3, 0), t), 23 * t)
    p = SystemParams(1, 2, 3)
    assert np.allclose(phase_epsilon(p, t), 20 * t + 2 / 3 * np.sin(3 * t))


# --- reduced state -------------------------------------------------------

def test_reduced_state_examples():
    rho = pure_state(1.1, 0.4)
    assert np.allclose(reduced_state(rho, 1.0, 0.0), rho)
    plus, minus = plus_x_pair()
    g = 0.3 * np.exp(0.7j)
    assert abs(reduced_state(plus, g, 2.0)[0, 1]) == pytest.approx(0.15)
    with pytest.raises(ContractViolation):
        reduced_state(plus, 1.01, 0.0)


def test_reduced_states_are_physical():
    rng = np.random.default_rng(5)
    g = rng.uniform(0, 1, 200) * np.exp(2j * np.pi * rng.uniform(size=200))
    eps = rng.uniform(0, 50, 200)
    out = reduced_states(pure_state(0.8, 2.0), g, eps)
    eig = np.linalg.eigvalsh(out)
    assert np.all(eig > -1e-12)
    assert np.allclose(np.trace(out, axis1=1, axis2=2), 1.0)
    assert np.allclose(out[5], reduced_state(pure_state(0.8, 2.0), g[5], eps[5]))


def test_pair_distance_equals_amplitude():
    p = SystemParams(1.3, 4.0, 2.5)
    tr = solve_g(p)
    r1, r2 = plus_x_pair()
    d = trace_distance_series(reduced_states(r1, tr.g, tr.eps),
                              reduced_states(r2, tr.g, tr.eps))
    assert np.max(np.abs(d - np.abs(tr.g))) < 1e-12
    assert np.array_equal(tr.distance, np.abs(tr.g))


# --- weak coupling -------------------------------------------------------

def test_weak_coupling_zero_drive_closed_form():
    t = np.linspace(0, 30, 601)
    g1, dg1 = weak_coupling_g1(SystemParams(0.1, 0.0, 2.0), t)
    assert np.allclose(dg1, -0.5 * (1 - np.exp(-t)), atol=1e-14)
    assert np.allclose(g1, -0.5 * (t - 1 + np.exp(-t)), atol=1e-13)


@pytest.mark.parametrize("p", [SystemParams(0.1, 2, 1), SystemParams(0.1, 5, 3),
                               SystemParams(0.1, 15, 0.5)])
def test_weak_coupling_derivative_consistency(p):
    t = np.linspace(0, 20, 20001)
    g1, dg1 = weak_coupling_g1(p, t)
    assert g1[0] == 0 and abs(dg1[0]) < 1e-12
    assert np.max(np.abs(g1 - cumulative(dg1, t))) < 1e-8


def test_weak_coupling_error_is_second_order():
    base = SystemParams(0.05, 2.0, 1.0)
    errs = []
    for g in (0.05, 0.025):
        p = base.replace(gamma0=g)
        tr = solve_g(p, IntegratorConfig(adaptive_horizon=False))
        errs.append(np.max(np.abs(weak_coupling_g(p, tr.tau) - tr.g)))
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_weak_coupling_requires_driving():
    with pytest.raises(ValueError):
        weak_coupling_g(SystemParams(0.1, 2.0, 0.0), np.linspace(0, 1, 3))
    with pytest.raises(ValueError, match="orders above"):
        weak_coupling_g(SystemParams(0.1, 40.0, 0.5), np.linspace(0, 1, 3))
