"""
High-frequency reduction and Bessel-zero ridge lines.

For fast driving, moving to the frame that absorbs the modulation multiplies
the system-bath coupling by exp(i (delta/omega_d) sin(omega_d tau)). Keeping
only the zeroth Fourier component leaves a static, resonant system with
coupling beta * g_k, beta = J_0(delta/omega_d), i.e. gamma0 -> beta^2 gamma0.
"""

from dataclasses import dataclass

import numpy as np

from .qcore import MAX_BESSEL_ARG, bessel_j, bessel_root
from .rwa import IntegratorConfig, solve_g


@dataclass(frozen=True)
class HighFreqMap:
    beta: float
    gamma_eff: float


def high_freq_equivalent(params):
    """Coupling renormalisation of the equivalent static system.

    Only meaningful for omega_d >> 1; the equivalent system has zero
    detuning.
    """
    if params.omega_d <= 0:
        raise ValueError("the high-frequency map needs omega_d > 0")
    beta = bessel_j(0, params.delta / params.omega_d)
    return HighFreqMap(beta=beta, gamma_eff=beta * beta * params.gamma0)


def equivalent_static_params(params):
    hf = high_freq_equivalent(params)
    return params.replace(gamma0=hf.gamma_eff, delta=0.0, omega_d=0.0)


def hf_gap(params, cfg=None):
    """Sup-norm gap between driven D(tau) and that of the static equivalent.

    Both trajectories come from the RWA engine on the same grid, where
    D = |G| for the sigma_x pair.
    """
    cfg = cfg or IntegratorConfig(adaptive_horizon=False)
    driven = solve_g(params, cfg)
    static = solve_g(equivalent_static_params(params), cfg)
    return float(np.max(np.abs(driven.distance - static.distance)))


@dataclass(frozen=True)
class Ridge:
    ratio: float  # omega_d / delta
    root: float  # argument x_k with J(x_k) = 0
    function: str  # "J0" or "J1"
    index: int  # k, counting positive roots from 1


def bessel_ridges(ratio_range):
    """Lines omega_d/delta = 1/x_k for roots x_k of J_0 and J_1.

    ``ratio_range = (lo, hi)`` bounds omega_d/delta; roots beyond the
    supported Bessel argument range are not reported.
    """
    lo, hi = ratio_range
    if not (0 < lo < hi):
        return []
    x_lo = 1.0 / hi
    x_hi = min(1.0 / lo, MAX_BESSEL_ARG - 1.0)
    ridges = []
    for order in (0, 1):
        k = 1
        while True:
            try:
                x = bessel_root(order, k)
            except ValueError:
                break
            if x > x_hi:
                break
            if x >= x_lo:
                ridges.append(Ridge(1.0 / x, x, f"J{order}", k))
            k += 1
    return sorted(ridges, key=lambda r: r.ratio, reverse=True)
