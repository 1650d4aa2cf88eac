"""
Two-level algebra: Pauli matrices, density-matrix checks, trace distance,
integer-order Bessel functions, and the dimensionless model parameters.

Matrices are plain ``(2, 2)`` complex numpy arrays in the ``{|0>, |1>}``
basis, where ``|0>`` is the excited level (the one projected by
``sigma_+ sigma_-``).
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

TRACE_TOL = 1e-9
HERMITIAN_TOL = 1e-9
POSITIVITY_TOL = 1e-7

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = SIGMA_PLUS.T.copy()
IDENTITY = np.eye(2, dtype=complex)
# sigma_+ sigma_- = |0><0|
EXCITED_PROJECTOR = SIGMA_PLUS @ SIGMA_MINUS

for _m in (SIGMA_X, SIGMA_Y, SIGMA_Z, SIGMA_PLUS, SIGMA_MINUS, IDENTITY,
           EXCITED_PROJECTOR):
    _m.setflags(write=False)


class ContractViolation(ValueError):
    """An input failed a documented precondition."""


@dataclass(frozen=True)
class SystemParams:
    """Model parameters in units of the bath width.

    Attributes
    ----------
    gamma0 : float
        System-bath coupling strength.
    delta : float
        Driving amplitude (static detuning when ``omega_d == 0``).
    omega_d : float
        Driving frequency.
    omega0 : float
        Qubit frequency, which is also the centre of the Lorentzian.
    """

    gamma0: float
    delta: float = 0.0
    omega_d: float = 0.0
    omega0: float = 20.0

    def __post_init__(self):
        for name in ("gamma0", "delta", "omega_d", "omega0"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ContractViolation(f"{name} must be finite, got {v}")
        if self.gamma0 < 0 or self.delta < 0 or self.omega_d < 0:
            raise ContractViolation(
                f"gamma0, delta and omega_d must be >= 0: {self}")
        if self.omega0 <= 0:
            raise ContractViolation(f"omega0 must be > 0, got {self.omega0}")

    def replace(self, **changes):
        d = asdict(self)
        d.update(changes)
        return SystemParams(**d)

    def label(self):
        return (f"gamma0={self.gamma0:g}, delta={self.delta:g}, "
                f"omega_d={self.omega_d:g}, omega0={self.omega0:g}")


def commutator(a, b):
    return a @ b - b @ a


def anticommutator(a, b):
    return a @ b + b @ a


def dag(a):
    return a.conj().T


def is_hermitian(a, tol=HERMITIAN_TOL):
    return bool(np.max(np.abs(a - dag(a))) <= tol)


def check_density(rho, physical=True, trace_tol=TRACE_TOL,
                  positivity_tol=POSITIVITY_TOL):
    """Raise :class:`ContractViolation` unless ``rho`` is a valid state.

    Hermiticity is always required; unit trace and positivity only when
    ``physical`` is set.
    """
    rho = np.asarray(rho)
    if rho.shape != (2, 2):
        raise ContractViolation(f"expected a 2x2 matrix, got shape {rho.shape}")
    if not is_hermitian(rho):
        raise ContractViolation("density matrix is not Hermitian")
    if physical:
        tr = np.trace(rho)
        if abs(tr - 1) > trace_tol:
            raise ContractViolation(f"trace {tr} differs from 1")
        if min_eigenvalue(rho) < -positivity_tol:
            raise ContractViolation("density matrix has a negative eigenvalue")
    return rho


def min_eigenvalue(rho):
    """Smallest eigenvalue of a Hermitian 2x2 matrix (closed form)."""
    a = rho[0, 0].real
    d = rho[1, 1].real
    return 0.5 * (a + d) - math.hypot(0.5 * (a - d), abs(rho[0, 1]))


def trace_distance(rho1, rho2):
    """Trace distance ``0.5 * ||rho1 - rho2||_1`` of two 2x2 Hermitian matrices.

    The difference of two such matrices has eigenvalues ``t/2 +- r`` with
    ``r = sqrt(((a - d)/2)^2 + |b|^2)``; for equal traces the result is ``r``.
    """
    rho1 = np.asarray(rho1)
    rho2 = np.asarray(rho2)
    if not (is_hermitian(rho1) and is_hermitian(rho2)):
        raise ContractViolation("trace_distance needs Hermitian inputs")
    diff = rho1 - rho2
    half_tr = 0.5 * (diff[0, 0].real + diff[1, 1].real)
    r = math.hypot(0.5 * (diff[0, 0].real - diff[1, 1].real), abs(diff[0, 1]))
    return abs(half_tr + r) / 2 + abs(half_tr - r) / 2


def trace_distance_series(rho1, rho2):
    """Vectorised trace distance for stacks of shape ``(n, 2, 2)``."""
    diff = np.asarray(rho1) - np.asarray(rho2)
    half_tr = 0.5 * (diff[:, 0, 0].real + diff[:, 1, 1].real)
    r = np.hypot(0.5 * (diff[:, 0, 0].real - diff[:, 1, 1].real),
                 np.abs(diff[:, 0, 1]))
    return 0.5 * (np.abs(half_tr + r) + np.abs(half_tr - r))


def pure_state(theta, phi):
    """Projector onto ``cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>``."""
    psi = np.array([math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)])
    return np.outer(psi, psi.conj())


def plus_x_pair():
    """The two eigenstates of sigma_x, ``(|+x><+x|, |-x><-x|)``."""
    plus = 0.5 * np.array([[1, 1], [1, 1]], dtype=complex)
    minus = 0.5 * np.array([[1, -1], [-1, 1]], dtype=complex)
    return plus, minus


MAX_BESSEL_ORDER = 60
MAX_BESSEL_ARG = 100.0


def _miller_start(n, x):
    # start well above both the requested order and the turning point |x|
    m = max(n, int(abs(x))) + 20 + int(3 * math.sqrt(max(n, abs(x), 1.0)))
    return m + (m % 2)


def bessel_j_all(nmax, x):
    """``[J_0(x), ..., J_nmax(x)]`` by downward recurrence (Miller).

    Normalised through ``J_0 + 2 sum_k J_2k = 1``.
    """
    if nmax < 0:
        raise ValueError("nmax must be >= 0")
    x = float(x)
    out = np.zeros(nmax + 1)
    if x == 0.0:
        out[0] = 1.0
        return out
    ax = abs(x)
    if ax < 1e-6:
        # recurrence ratios 2k/x would overflow; two series terms suffice
        h = 0.5 * ax
        lead = 1.0
        for n in range(nmax + 1):
            out[n] = lead * (1.0 - h * h / (n + 1))
            lead *= h / (n + 1)
        if x < 0:
            out[1::2] *= -1
        return out
    start = _miller_start(nmax, ax)
    vals = np.zeros(start + 2)
    vals[start] = 1e-300
    for k in range(start, 0, -1):
        vals[k - 1] = (2 * k / ax) * vals[k] - vals[k + 1]
        if abs(vals[k - 1]) > 1e250:
            vals[k - 1:] *= 1e-250
    norm = vals[0] + 2 * vals[2::2].sum()
    out[:] = vals[:nmax + 1] / norm
    if x < 0:
        out[1::2] *= -1
    return out


def bessel_j(n, x):
    """Bessel function of the first kind of integer order ``n``.

    Valid for ``|n| <= 60`` and ``|x| <= 100``; uses
    ``J_{-n}(x) = (-1)^n J_n(x)`` for negative orders.
    """
    if int(n) != n:
        raise ValueError(f"order must be an integer, got {n}")
    n = int(n)
    if abs(n) > MAX_BESSEL_ORDER:
        raise ValueError(f"order {n} outside |n| <= {MAX_BESSEL_ORDER}")
    if abs(x) > MAX_BESSEL_ARG:
        raise ValueError(f"argument {x} outside |x| <= {MAX_BESSEL_ARG}")
    val = bessel_j_all(abs(n), x)[abs(n)]
    if n < 0 and n % 2:
        val = -val
    return float(val)


def bessel_root(order, k, tol=1e-13):
    """k-th positive root (k >= 1) of ``J_order`` by bracketing and bisection."""
    f = lambda x: bessel_j(order, x)
    step = 0.1
    x = 0.5 if order == 0 else float(order) + 0.5
    found = 0
    fx = f(x)
    while x < MAX_BESSEL_ARG:
        xn = x + step
        fn = f(xn)
        if fx == 0.0 or fx * fn < 0:
            found += 1
            if found == k:
                lo, hi = x, xn
                flo = fx
                while hi - lo > tol:
                    mid = 0.5 * (lo + hi)
                    fm = f(mid)
                    if (fm < 0) == (flo < 0):
                        lo, flo = mid, fm
                    else:
                        hi = mid
                return 0.5 * (lo + hi)
        x, fx = xn, fn
    raise ValueError(f"root {k} of J_{order} beyond the supported range")
