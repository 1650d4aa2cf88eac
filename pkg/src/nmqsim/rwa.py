"""
Exact reduced dynamics under the rotating wave approximation.

In the single-excitation sector the qubit state is fixed by one complex
amplitude G(tau), which obeys

    G'' + [1 - i delta cos(omega_d tau)] G' + (gamma0 / 2) G = 0,
    G(0) = 1,  G'(0) = 0.

Populations decay as |G|^2 and coherences as G exp(-i eps(tau)).
"""

import cmath
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .integrate import LinearSystem, check_status, integrate, uniform_grid
from .qcore import (ContractViolation, SystemParams, bessel_j_all,
                    check_density, MAX_BESSEL_ORDER)

GROWTH_TOL = 1e-6
SLOW_DECAY_GAMMA0 = 0.1
MAX_ADAPTIVE_HORIZON = 120.0
HORIZON_DECAY_TARGET = 1e-3


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-9
    atol: float = 1e-11
    dtau: float = 0.005
    tau_max: float = 30.0
    # double tau_max for gamma0 < 0.1 until |G| < 1e-3 or tau = 120
    adaptive_horizon: bool = True
    max_steps: int = 10_000_000

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ContractViolation("integrator tolerances must be > 0")
        if self.dtau <= 0 or self.tau_max <= 0:
            raise ContractViolation("dtau and tau_max must be > 0")


@dataclass(frozen=True)
class AmplitudeTrajectory:
    params: SystemParams
    tau: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    eps: np.ndarray = field(repr=False)

    @property
    def distance(self):
        """Trace distance of the evolved sigma_x eigenstate pair, i.e. |G|."""
        return np.abs(self.g)

    @property
    def horizon(self):
        return float(self.tau[-1])


def amplitude_system(params):
    """First-order form of the amplitude equation for y = (G, G')."""
    matrix = sp.csr_matrix(np.array([[0.0, 1.0],
                                     [-0.5 * params.gamma0, -1.0]]))
    return LinearSystem(matrix, np.array([0.0, 1j * params.delta]),
                        params.omega_d)


def _integrate_g(params, cfg, tau_max):
    tau = uniform_grid(tau_max, cfg.dtau)
    y0 = np.array([1.0 + 0j, 0.0 + 0j])
    ys, status, _ = integrate(amplitude_system(params), y0, tau, cfg.rtol,
                              cfg.atol, cfg.max_steps)
    check_status(status, params.label())
    return tau, ys[:, 0], ys[:, 1]


def solve_g(params, cfg=None):
    """Integrate the amplitude equation on a uniform grid.

    With ``cfg.adaptive_horizon`` and ``gamma0 < 0.1`` the horizon is doubled
    until ``|G(tau_max)| < 1e-3`` or ``tau_max`` reaches 120.

    Raises
    ------
    IntegrationError
        If the stepper underflows; the message names the parameter point.
    """
    cfg = cfg or IntegratorConfig()
    tau_max = cfg.tau_max
    tau, g, dg = _integrate_g(params, cfg, tau_max)
    if cfg.adaptive_horizon and params.gamma0 < SLOW_DECAY_GAMMA0:
        while (abs(g[-1]) >= HORIZON_DECAY_TARGET
               and tau_max < MAX_ADAPTIVE_HORIZON and params.gamma0 > 0):
            tau_max = min(2 * tau_max, MAX_ADAPTIVE_HORIZON)
            tau, g, dg = _integrate_g(params, cfg, tau_max)
    return AmplitudeTrajectory(params, tau, g, dg, phase_epsilon(params, tau))


def static_g_closed_form(gamma0, delta, tau):
    """Analytic G(tau) for undriven dynamics with static detuning ``delta``.

    G = exp(-a tau/2) [cosh(d tau/2) + (a/d) sinh(d tau/2)],
    a = 1 - i delta, d = sqrt(a^2 - 2 gamma0); the d -> 0 limit is handled
    through sinh(z)/z.
    """
    tau = np.asarray(tau, dtype=float)
    a = 1.0 - 1j * delta
    d = np.sqrt(complex(a * a - 2.0 * gamma0))
    z = 0.5 * d * tau
    small = np.abs(z) < 1e-4
    z_safe = np.where(small, 1.0, z)
    sinhc = np.where(small, 1.0 + z * z / 6.0 + z ** 4 / 120.0,
                     np.sinh(z_safe) / z_safe)
    return np.exp(-0.5 * a * tau) * (np.cosh(z) + 0.5 * a * tau * sinhc)


def phase_epsilon(params, tau):
    """Free-evolution phase omega0 tau + (delta/omega_d) sin(omega_d tau)."""
    tau = np.asarray(tau, dtype=float)
    if params.omega_d < 1e-12:
        return (params.omega0 + params.delta) * tau
    return (params.omega0 * tau
            + params.delta / params.omega_d * np.sin(params.omega_d * tau))


def reduced_state(rho0, g, eps):
    """Qubit state at a time where the amplitude is ``g`` and the phase ``eps``."""
    rho0 = check_density(rho0)
    if abs(g) > 1 + GROWTH_TOL:
        raise ContractViolation(f"|G| = {abs(g)} exceeds 1")
    p = rho0[0, 0].real * abs(g) ** 2
    c = rho0[0, 1] * g * cmath.exp(-1j * eps)
    return np.array([[p, c], [np.conj(c), 1.0 - p]], dtype=complex)


def reduced_states(rho0, g, eps):
    """Vectorised :func:`reduced_state` over sample arrays; shape (n, 2, 2)."""
    rho0 = check_density(rho0)
    g = np.asarray(g)
    if np.any(np.abs(g) > 1 + GROWTH_TOL):
        raise ContractViolation("|G| exceeds 1 along the trajectory")
    out = np.empty(g.shape + (2, 2), dtype=complex)
    p = rho0[0, 0].real * np.abs(g) ** 2
    c = rho0[0, 1] * g * np.exp(-1j * np.asarray(eps))
    out[..., 0, 0] = p
    out[..., 0, 1] = c
    out[..., 1, 0] = np.conj(c)
    out[..., 1, 1] = 1.0 - p
    return out


def _bessel_cutoff(x, threshold=1e-12):
    js = bessel_j_all(MAX_BESSEL_ORDER, x)
    for n in range(int(abs(x)) + 1, MAX_BESSEL_ORDER + 1):
        if np.all(np.abs(js[n:]) < threshold):
            return n, js[:n + 1]
    raise ValueError(
        f"Bessel series for delta/omega_d = {x:g} needs orders above "
        f"{MAX_BESSEL_ORDER}")


def weak_coupling_g1(params, tau):
    """First-order coefficient g1(tau) and its derivative.

    Uses the expansion exp(-i x sin(w s)) = sum_n J_n(x) exp(-i n w s),
    x = delta/omega_d, and integrates each Fourier term analytically. The
    n = m terms of the first sum are secular and integrate to tau.
    """
    if params.omega_d <= 0:
        raise ValueError("the weak-coupling series needs omega_d > 0; "
                         "use static_g_closed_form for static driving")
    tau = np.asarray(tau, dtype=float)
    w = params.omega_d
    nb, js = _bessel_cutoff(params.delta / w)
    orders = np.arange(-nb, nb + 1)
    j = np.concatenate([js[:0:-1] * (-1.0) ** orders[:nb], js])
    coeff = np.outer(j / (1.0 - 1j * orders * w), j)  # [n, m]

    # first sum depends on k = n - m only
    ks = np.arange(-2 * nb, 2 * nb + 1)
    a_k = np.array([np.trace(coeff, offset=-k) for k in ks])
    # second sum depends on m only
    b_m = coeff.sum(axis=0)

    t = tau[:, None]
    phase_k = np.exp(-1j * ks * w * t)
    dg1 = -0.5 * (phase_k @ a_k
                  - np.exp(-tau) * (np.exp(1j * orders * w * t) @ b_m))

    nz = ks != 0
    int_k = np.empty((tau.size, ks.size), dtype=complex)
    int_k[:, ~nz] = t
    int_k[:, nz] = (phase_k[:, nz] - 1.0) / (-1j * ks[nz] * w)
    rate = -1.0 + 1j * orders * w
    int_m = (np.exp(rate * t) - 1.0) / rate
    g1 = -0.5 * (int_k @ a_k - int_m @ b_m)
    return g1, dg1


def weak_coupling_g(params, tau):
    """First-order weak-coupling approximation G ~ 1 + gamma0 g1(tau)."""
    g1, _ = weak_coupling_g1(params, tau)
    return 1.0 + params.gamma0 * g1
