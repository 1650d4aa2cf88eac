"""
Adaptive Dormand-Prince 5(4) integrator for periodically modulated linear
systems

    dy/dt = L y + cos(omega t) * (d * y),

with ``L`` a sparse complex matrix (CSR) and ``d`` a diagonal drive vector.
Both dynamics engines have this form. Output is produced on a uniform grid
through the quartic continuous extension, so the step-size sequence never
depends on the output spacing.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numba import njit

OK = 0
STEP_UNDERFLOW = 1
MAX_STEPS_EXCEEDED = 2

_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9

_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = (
    9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656)
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84

_E1, _E3, _E4, _E5, _E6, _E7 = (
    -71 / 57600, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40)

# Shampine's dense-output polynomial, rows = stages, columns = powers 1..4.
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608,
     -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933,
     87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304,
     -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408,
     701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883,
     -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423,
     69997945 / 29380423],
])


class IntegrationError(RuntimeError):
    """Raised when the adaptive stepper cannot reach the requested horizon."""


@dataclass(frozen=True)
class LinearSystem:
    """``dy/dt = matrix @ y + cos(omega t) * drive * y``."""

    matrix: sp.csr_matrix
    drive: np.ndarray
    omega: float

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=np.complex128)
        m.sort_indices()
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "drive",
                           np.ascontiguousarray(self.drive, dtype=np.complex128))
        if m.shape[0] != m.shape[1] or m.shape[0] != self.drive.shape[0]:
            raise ValueError("matrix and drive dimensions disagree")

    def rhs(self, t, y):
        return self.matrix @ y + np.cos(self.omega * t) * self.drive * y


@njit(cache=True)
def _rhs(t, y, indptr, indices, data, drive, omega, out):
    f = np.cos(omega * t)
    for r in range(y.shape[0]):
        acc = f * drive[r] * y[r]
        for k in range(indptr[r], indptr[r + 1]):
            acc += data[k] * y[indices[k]]
        out[r] = acc


@njit(cache=True)
def _err_norm(err, y, y_new, rtol, atol):
    # max norm: an RMS over mostly-idle hierarchy components would dilute
    # the error of the few that carry the physical state
    acc = 0.0
    for i in range(y.shape[0]):
        sc = atol + rtol * max(abs(y[i]), abs(y_new[i]))
        acc = max(acc, abs(err[i]) / sc)
    return acc


@njit(cache=True)
def _initial_step(t0, y0, f0, args, rtol, atol, tmp, f1):
    indptr, indices, data, drive, omega = args
    n = y0.shape[0]
    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        sc = atol + rtol * abs(y0[i])
        d0 = max(d0, abs(y0[i]) / sc)
        d1 = max(d1, abs(f0[i]) / sc)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    if not h0 > 0.0:
        # non-finite derivative: report a zero step, i.e. underflow
        return 0.0
    for i in range(n):
        tmp[i] = y0[i] + h0 * f0[i]
    _rhs(t0 + h0, tmp, indptr, indices, data, drive, omega, f1)
    d2 = 0.0
    for i in range(n):
        sc = atol + rtol * abs(y0[i])
        d2 = max(d2, abs(f1[i] - f0[i]) / sc)
    d2 = d2 / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1)


@njit(cache=True)
def _dopri5(indptr, indices, data, drive, omega, y0, t_out, rtol, atol,
            max_steps):
    """Integrate from ``t_out[0]`` and sample at ``t_out``.

    Returns ``(ys, status, n_accepted)``; ``ys[k]`` is the state at
    ``t_out[k]``. ``status`` is one of OK, STEP_UNDERFLOW,
    MAX_STEPS_EXCEEDED. On failure the rows past the last reached sample
    are left as NaN.
    """
    n = y0.shape[0]
    m = t_out.shape[0]
    ys = np.full((m, n), np.nan + 0j)
    ys[0] = y0
    if m == 1:
        return ys, OK, 0

    t = t_out[0]
    t_end = t_out[m - 1]
    y = y0.copy()
    k1 = np.empty(n, dtype=np.complex128)
    k2 = np.empty_like(k1)
    k3 = np.empty_like(k1)
    k4 = np.empty_like(k1)
    k5 = np.empty_like(k1)
    k6 = np.empty_like(k1)
    k7 = np.empty_like(k1)
    tmp = np.empty_like(k1)
    y_new = np.empty_like(k1)
    err = np.empty_like(k1)
    q = np.empty((n, 4), dtype=np.complex128)

    args = (indptr, indices, data, drive, omega)
    _rhs(t, y, indptr, indices, data, drive, omega, k1)
    h = _initial_step(t, y, k1, args, rtol, atol, tmp, k2)
    h = min(h, t_end - t)
    next_out = 1
    steps = 0

    while next_out < m:
        if steps >= max_steps:
            return ys, MAX_STEPS_EXCEEDED, steps
        h_min = 10.0 * np.abs(np.nextafter(t, np.inf) - t)
        if h < h_min:
            return ys, STEP_UNDERFLOW, steps
        if t + h > t_end:
            h = t_end - t

        for i in range(n):
            tmp[i] = y[i] + h * (_A21 * k1[i])
        _rhs(t + _C2 * h, tmp, indptr, indices, data, drive, omega, k2)
        for i in range(n):
            tmp[i] = y[i] + h * (_A31 * k1[i] + _A32 * k2[i])
        _rhs(t + _C3 * h, tmp, indptr, indices, data, drive, omega, k3)
        for i in range(n):
            tmp[i] = y[i] + h * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
        _rhs(t + _C4 * h, tmp, indptr, indices, data, drive, omega, k4)
        for i in range(n):
            tmp[i] = y[i] + h * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i]
                                 + _A54 * k4[i])
        _rhs(t + _C5 * h, tmp, indptr, indices, data, drive, omega, k5)
        for i in range(n):
            tmp[i] = y[i] + h * (_A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i]
                                 + _A64 * k4[i] + _A65 * k5[i])
        _rhs(t + h, tmp, indptr, indices, data, drive, omega, k6)
        for i in range(n):
            y_new[i] = y[i] + h * (_B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i]
                                   + _B5 * k5[i] + _B6 * k6[i])
        _rhs(t + h, y_new, indptr, indices, data, drive, omega, k7)
        for i in range(n):
            err[i] = h * (_E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i]
                          + _E5 * k5[i] + _E6 * k6[i] + _E7 * k7[i])
        en = _err_norm(err, y, y_new, rtol, atol)
        steps += 1

        if en <= 1.0:
            t_new = t + h
            if t_new >= t_end:
                t_new = t_end
            # emit every output sample in (t, t_new]
            if t_out[next_out] <= t_new:
                for i in range(n):
                    for j in range(4):
                        q[i, j] = (k1[i] * _P[0, j] + k3[i] * _P[2, j]
                                   + k4[i] * _P[3, j] + k5[i] * _P[4, j]
                                   + k6[i] * _P[5, j] + k7[i] * _P[6, j])
                while next_out < m and t_out[next_out] <= t_new:
                    x = (t_out[next_out] - t) / h
                    if next_out == m - 1 and t_new == t_end:
                        ys[next_out] = y_new
                    else:
                        x2 = x * x
                        for i in range(n):
                            ys[next_out, i] = y[i] + h * (
                                q[i, 0] * x + q[i, 1] * x2 + q[i, 2] * x2 * x
                                + q[i, 3] * x2 * x2)
                    next_out += 1
            t = t_new
            for i in range(n):
                y[i] = y_new[i]
                k1[i] = k7[i]
            if en == 0.0:
                factor = 10.0
            else:
                factor = min(10.0, 0.9 * en ** -0.2)
            h = h * factor
        elif np.isfinite(en):
            h = h * max(0.2, 0.9 * en ** -0.2)
        else:
            h = h * 0.2

    return ys, OK, steps


def integrate(system, y0, t_out, rtol, atol, max_steps=10_000_000):
    """Run the stepper for a :class:`LinearSystem`.

    Returns ``(ys, status, n_steps)`` as described for :func:`_dopri5`.
    """
    m = system.matrix
    return _dopri5(m.indptr.astype(np.int64), m.indices.astype(np.int64),
                   m.data, system.drive, float(system.omega),
                   np.ascontiguousarray(y0, dtype=np.complex128),
                   np.ascontiguousarray(t_out, dtype=np.float64),
                   float(rtol), float(atol), int(max_steps))


def uniform_grid(tau_max, dtau):
    """Uniform grid ``0, dtau, ..., tau_max`` (tau_max snapped to the grid)."""
    n = int(round(tau_max / dtau))
    return np.arange(n + 1) * dtau


def check_status(status, context):
    if status == STEP_UNDERFLOW:
        raise IntegrationError(f"step size underflow at {context}")
    if status == MAX_STEPS_EXCEEDED:
        raise IntegrationError(f"maximum number of steps exceeded at {context}")
