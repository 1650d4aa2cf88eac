"""
Non-Markovianity measures built on trace-distance trajectories.

Both measures work on the discrete rises of D(tau). Neither one
differentiates or smooths the samples.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .qcore import SystemParams, pure_state, trace_distance_series

MEASURES = ("BLP", "LR")
ENGINES = ("rwa", "heom")
D_UPPER_TOL = 1e-9


@dataclass(frozen=True)
class Trajectory:
    """Trace distance samples of one initial pair on a uniform grid."""

    tau: np.ndarray
    distance: np.ndarray
    engine: str = "rwa"
    params: Optional[SystemParams] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        d = np.asarray(self.distance, dtype=float)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "distance", d)
        if tau.ndim != 1 or tau.shape != d.shape:
            raise ValueError("tau and distance must be 1-D arrays of equal length")
        if tau.size < 2:
            raise ValueError("a trajectory needs at least 2 samples")
        steps = np.diff(tau)
        if np.any(steps <= 0):
            raise ValueError("time grid must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-6, atol=1e-12):
            raise ValueError("time grid must be uniform")
        if np.any(d < 0) or np.any(d > 1 + D_UPPER_TOL) or not np.all(np.isfinite(d)):
            raise ValueError("trace distance samples must lie in [0, 1]")
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}")


@dataclass(frozen=True)
class NMResult:
    n_blp: float
    n_lr: float
    window: tuple
    params: Optional[SystemParams] = None
    engine: str = "rwa"
    horizon: float = math.nan


def _samples(traj):
    d = traj.distance if isinstance(traj, Trajectory) else np.asarray(traj, float)
    if d.size < 2:
        raise ValueError("at least 2 samples are required")
    return d


def n_blp(traj):
    """Total information backflow: the sum of all positive increments of D."""
    d = _samples(traj)
    return float(np.clip(np.diff(d), 0.0, None).sum())


def largest_revival(traj):
    """Largest rise ``D_j - D_i`` with ``i <= j`` and the indices ``(i, j)``.

    One pass, tracking the running minimum.
    """
    d = _samples(traj)
    rise = d - np.minimum.accumulate(d)
    j = int(np.argmax(rise))
    if rise[j] <= 0:
        return 0.0, (0, 0)
    i = int(np.argmin(d[:j + 1]))
    return float(rise[j]), (i, j)


def n_lr(traj):
    """Largest revival of D relative to its running minimum."""
    return largest_revival(traj)[0]


def measure_trajectory(traj):
    """Both measures for one trajectory, packed into an :class:`NMResult`."""
    lr, (i, j) = largest_revival(traj)
    return NMResult(
        n_blp=n_blp(traj), n_lr=lr,
        window=(float(traj.tau[i]), float(traj.tau[j])),
        params=traj.params, engine=traj.engine, horizon=float(traj.tau[-1]))


def measure_value(traj, measure):
    if measure == "BLP":
        return n_blp(traj)
    if measure == "LR":
        return n_lr(traj)
    raise ValueError(f"unknown measure {measure!r}; expected one of {MEASURES}")


def n_relative(value, static_max):
    """Driven measure in units of the best static one at the same coupling.

    Returns ``None`` when the static maximum vanishes, so a missing
    normalisation can never look like suppression.
    """
    if static_max is None or not static_max > 0:
        return None
    return value / static_max


def m_max(values, static_max):
    """Largest relative measure over a grid of driven values."""
    values = [v for v in values if v is not None]
    if not values:
        raise ValueError("empty grid")
    rel = n_relative(max(values), static_max)
    return rel


def bloch_pair(theta, phi):
    """Antipodal pure states along the Bloch direction (theta, phi)."""
    return pure_state(theta, phi), pure_state(math.pi - theta, phi + math.pi)


def default_pair_family(n_theta=12, n_phi=12):
    """Antipodal pairs on a polar x azimuthal grid.

    Polar angles cover (0, pi/2] (the lower hemisphere repeats the same
    pairs); theta = pi/2 is always included.
    """
    thetas = np.linspace(0.0, math.pi / 2, n_theta)
    phis = np.linspace(0.0, math.pi, n_phi, endpoint=False)
    return [(float(t), float(p)) for t in thetas for p in phis]


@dataclass(frozen=True)
class PairScanResult:
    best_angles: tuple
    best_value: float
    measure: str
    values: list  # (theta, phi, n_blp, n_lr) per pair


def pair_scan(evolve, pair_family, measure="BLP", tol=1e-12):
    """Find the antipodal initial pair that maximises a measure.

    ``evolve(rho0)`` must return ``(tau, states)`` with ``states`` of shape
    ``(n, 2, 2)``. Ties within ``tol`` keep the first pair of the family, and
    the sigma_x pair (theta = pi/2, phi = 0) is preferred among ties.
    """
    if measure not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}")
    rows = []
    best = None
    for theta, phi in pair_family:
        r1, r2 = bloch_pair(theta, phi)
        tau, s1 = evolve(r1)
        _, s2 = evolve(r2)
        d = np.clip(trace_distance_series(s1, s2), 0.0, 1.0)
        blp, lr = n_blp(d), n_lr(d)
        rows.append((theta, phi, blp, lr))
        value = blp if measure == "BLP" else lr
        is_sx = abs(theta - math.pi / 2) < 1e-12 and abs(phi) < 1e-12
        if best is None or value > best[1] + tol or (
                is_sx and abs(value - best[1]) <= tol):
            best = ((theta, phi), value)
    return PairScanResult(best[0], best[1], measure, rows)
