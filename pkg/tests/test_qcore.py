import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import jv

from nmqsim.qcore import (EXCITED_PROJECTOR, IDENTITY, SIGMA_MINUS,
                          SIGMA_PLUS, SIGMA_X, SIGMA_Y, SIGMA_Z,
                          ContractViolation, SystemParams, anticommutator,
                          bessel_j, bessel_j_all, bessel_root, check_density,
                          commutator, min_eigenvalue, plus_x_pair, pure_state,
                          trace_distance, trace_distance_series)


def power_series_j(n, x, terms=80):
    """J_n(x) from its Taylor series, summed with fsum (small |x| only)."""
    n_abs = abs(n)
    out = []
    for k in range(terms):
        out.append((-1) ** k * (x / 2) ** (2 * k + n_abs)
                   / (math.factorial(k) * math.factorial(k + n_abs)))
    val = math.fsum(out)
    return (-1) ** n_abs * val if n < 0 else val


def random_state(rng):
    """Haar-ish mixed state: random Bloch vector inside the ball."""
    v = rng.normal(size=3)
    v *= rng.uniform() ** (1 / 3) / np.linalg.norm(v)
    return 0.5 * (IDENTITY + v[0] * SIGMA_X + v[1] * SIGMA_Y + v[2] * SIGMA_Z)


def random_unitary(rng):
    z = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def svd_distance(a, b):
    return 0.5 * np.abs(np.linalg.eigvalsh(a - b)).sum()


# --- algebra -------------------------------------------------------------

def test_pauli_relations():
    assert np.allclose(commutator(SIGMA_X, SIGMA_Y), 2j * SIGMA_Z)
    assert np.allclose(anticommutator(SIGMA_X, SIGMA_X), 2 * IDENTITY)
    assert np.allclose(SIGMA_PLUS, 0.5 * (SIGMA_X + 1j * SIGMA_Y))
    assert np.allclose(SIGMA_MINUS, 0.5 * (SIGMA_X - 1j * SIGMA_Y))
    assert np.allclose(EXCITED_PROJECTOR, [[1, 0], [0, 0]])


def test_constants_are_read_only():
    with pytest.raises(ValueError):
        SIGMA_X[0, 0] = 1


def test_system_params_validation():
    p = SystemParams(1.0)
    assert p.omega0 == 20.0
    assert p.replace(delta=3).delta == 3
    for bad in ({"gamma0": -1}, {"gamma0": 1, "delta": -0.1},
                {"gamma0": 1, "omega_d": -2}, {"gamma0": 1, "omega0": 0},
                {"gamma0": math.nan}):
        with pytest.raises(ContractViolation):
            SystemParams(**bad)


def test_check_density_rejects_bad_states():
    check_density(0.5 * IDENTITY)
    with pytest.raises(ContractViolation):
        check_density(SIGMA_PLUS)
    with pytest.raises(ContractViolation):
        check_density(IDENTITY)
    with pytest.raises(ContractViolation):
        check_density(np.diag([1.2, -0.2]).astype(complex))
    check_density(IDENTITY, physical=False)


# --- trace distance ------------------------------------------------------

def test_trace_distance_examples():
    plus, minus = plus_x_pair()
    ground = np.diag([1.0, 0.0]).astype(complex)
    assert trace_distance(plus, plus) == 0.0
    assert trace_distance(plus, minus) == pytest.approx(1.0, abs=1e-15)
    assert trace_distance(ground, 0.5 * IDENTITY) == pytest.approx(0.5, abs=1e-15)


def test_trace_distance_rejects_non_hermitian():
    with pytest.raises(ContractViolation):
        trace_distance(SIGMA_PLUS, IDENTITY)


def test_trace_distance_randomized_properties():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        a, b, c = (random_state(rng) for _ in range(3))
        u = random_unitary(rng)
        dab = trace_distance(a, b)
        assert dab == pytest.approx(svd_distance(a, b), abs=1e-13)
        assert dab == pytest.approx(trace_distance(b, a), abs=1e-15)
        assert dab <= trace_distance(a, c) + trace_distance(c, b) + 1e-13
        ua, ub = u @ a @ u.conj().T, u @ b @ u.conj().T
        assert trace_distance(ua, ub) == pytest.approx(dab, abs=1e-12)
        assert 0.0 <= dab <= 1.0 + 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5),
       st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_trace_distance_matches_eigvalsh_for_hermitian(a, d, br, bi, e, f):
    # unequal traces exercise the general branch of the closed form
    x = np.array([[a, br + 1j * bi], [br - 1j * bi, d]])
    y = np.array([[e, 0], [0, f]], dtype=complex)
    assert trace_distance(x, y) == pytest.approx(svd_distance(x, y),
                                                 rel=1e-12, abs=1e-12)


def test_trace_distance_series_matches_scalar():
    rng = np.random.default_rng(1)
    a = np.array([random_state(rng) for _ in range(50)])
    b = np.array([random_state(rng) for _ in range(50)])
    ref = [trace_distance(x, y) for x, y in zip(a, b)]
    assert np.allclose(trace_distance_series(a, b), ref, atol=1e-15)


def test_min_eigenvalue_closed_form():
    rng = np.random.default_rng(3)
    for _ in range(200):
        r = random_state(rng)
        assert min_eigenvalue(r) == pytest.approx(np.linalg.eigvalsh(r)[0],
                                                  abs=1e-14)


def test_plus_x_pair():
    plus, minus = plus_x_pair()
    assert np.allclose(np.diag(plus), [0.5, 0.5])
    assert np.allclose(plus + minus, IDENTITY)
    for r in (plus, minus):
        assert np.trace(r @ r).real == pytest.approx(1.0)
    assert plus[0, 1] == 0.5 and minus[0, 1] == -0.5
    assert np.allclose(pure_state(math.pi / 2, 0.0), plus)


# --- Bessel functions ----------------------------------------------------

def test_bessel_small_argument_values():
    assert bessel_j(0, 0.0) == 1.0
    assert bessel_j(1, 0.0) == 0.0
    assert bessel_j(5, 0.0) == 0.0


@pytest.mark.parametrize("x", [0.01, 0.3, 1.0, 2.5, 4.0, -3.3, 7.5])
@pytest.mark.parametrize("n", [0, 1, 2, 5, 11, -1, -4])
def test_bessel_against_power_series(n, x):
    ref = power_series_j(n, x)
    assert bessel_j(n, x) == pytest.approx(ref, rel=1e-10, abs=1e-15)


def test_bessel_against_scipy_full_range():
    for x in np.linspace(-100, 100, 241):
        js = bessel_j_all(60, x)
        ref = jv(np.arange(61), x)
        assert np.allclose(js, ref, rtol=1e-10, atol=1e-13)


def test_bessel_range_errors():
    with pytest.raises(ValueError):
        bessel_j(61, 1.0)
    with pytest.raises(ValueError):
        bessel_j(0, 100.5)
    with pytest.raises(ValueError):
        bessel_j(1.5, 1.0)


@settings(max_examples=300, deadline=None)
@given(st.floats(0.1, 50), st.integers(-20, 20))
def test_bessel_recurrence(x, n):
    lhs = bessel_j(n - 1, x) + bessel_j(n + 1, x)
    rhs = 2 * n / x * bessel_j(n, x)
    assert lhs == pytest.approx(rhs, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 20))
def test_bessel_parseval(gamma):
    js = bessel_j_all(60, gamma)
    total = js[0] ** 2 + 2 * np.sum(js[1:] ** 2)
    assert total == pytest.approx(1.0, abs=1e-8)


def test_bessel_roots():
    # independent bracket: the series oracle changes sign across each root
    x0 = bessel_root(0, 1)
    assert x0 == pytest.approx(2.404826, abs=1e-6)
    assert power_series_j(0, x0 - 1e-6) > 0 > power_series_j(0, x0 + 1e-6)
    assert bessel_root(1, 1) == pytest.approx(3.831706, abs=1e-6)
    assert bessel_root(0, 2) == pytest.approx(5.520078, abs=1e-6)


@pytest.mark.parametrize("x", [1e-300, 1e-30, 3e-7, -2e-9])
def test_bessel_tiny_argument(x):
    js = bessel_j_all(6, x)
    assert np.all(np.isfinite(js))
    assert np.allclose(js, [power_series_j(n, x) for n in range(7)],
                       rtol=1e-14, atol=0)
