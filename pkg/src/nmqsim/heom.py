"""
Hierarchy equations of motion for the qubit coupled through sigma_x.

The bath correlation (gamma0/2) exp(-(1 + i omega0) tau) splits into two
exponentials with rates nu = (1 - i omega0, 1 + i omega0). Each auxiliary
density operator (ADO) carries a label (n1, n2), 0 <= n_k <= N, and

    d rho_n/dtau = -[i H_s(tau)^x + n.nu] rho_n
                   - i sum_k { sx^x rho_{n+e_k}
                               + c n_k [sx^x + (-1)^k sx^o] rho_{n-e_k} }

with H_s = (omega0 + delta cos(omega_d tau)) sigma_+ sigma_-, A^x B = [A, B],
A^o B = {A, B} and c = gamma0/4, which reproduces the correlation function
above. ADOs outside the lattice are zero.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from .integrate import (IntegrationError, LinearSystem, check_status,
                        integrate, uniform_grid)
from .measures import Trajectory
from .qcore import (EXCITED_PROJECTOR, IDENTITY, SIGMA_X, ContractViolation,
                    anticommutator, check_density, commutator, min_eigenvalue,
                    plus_x_pair, trace_distance_series)

TRACE_TOL = 1e-6
POSITIVITY_TOL = 1e-5
CONVERGED_DELTA = 1e-4


def coupling_prefactor(gamma0):
    """Coefficient c of the downward hierarchy couplings."""
    return gamma0 / 4.0


def bath_rates(omega0):
    return np.array([1.0 - 1j * omega0, 1.0 + 1j * omega0])


@dataclass(frozen=True)
class HeomConfig:
    n_trunc: int = 10
    rtol: float = 1e-8
    atol: float = 1e-10
    dtau: float = 0.005
    tau_max: float = 30.0
    max_steps: int = 10_000_000

    def __post_init__(self):
        if self.n_trunc < 2:
            raise ContractViolation("truncation depth must be >= 2")
        if self.rtol <= 0 or self.atol <= 0:
            raise ContractViolation("integrator tolerances must be > 0")
        if self.dtau <= 0 or self.tau_max <= 0:
            raise ContractViolation("dtau and tau_max must be > 0")


class HierarchyState:
    """Dense ``(N+1, N+1)`` lattice of 2x2 ADOs at time ``tau``.

    ``ados[n1, n2]`` is the unscaled operator rho_(n1, n2); ``ados[0, 0]``
    is the physical reduced state.
    """

    def __init__(self, n_trunc, ados=None, tau=0.0):
        self.n_trunc = n_trunc
        shape = (n_trunc + 1, n_trunc + 1, 2, 2)
        if ados is None:
            ados = np.zeros(shape, dtype=complex)
        elif ados.shape != shape:
            raise ValueError(f"expected ADO array of shape {shape}")
        self.ados = ados
        self.tau = tau

    @classmethod
    def initial(cls, rho0, n_trunc):
        state = cls(n_trunc)
        state.ados[0, 0] = check_density(rho0)
        return state

    @property
    def rho(self):
        return self.ados[0, 0]


def heom_rhs(state, params, tau):
    """Time derivative of every ADO, evaluated term by term.

    Reference implementation on unscaled ADOs; the integrator runs an
    equivalent sparse generator on rescaled ADOs (see :func:`heom_generator`).
    """
    n = state.n_trunc
    rho = state.ados
    c = coupling_prefactor(params.gamma0)
    nu = bath_rates(params.omega0)
    h_s = (params.omega0 + params.delta * math.cos(params.omega_d * tau)) \
        * EXCITED_PROJECTOR
    out = np.zeros_like(rho)
    for n1 in range(n + 1):
        for n2 in range(n + 1):
            r = rho[n1, n2]
            d = -1j * commutator(h_s, r) - (n1 * nu[0] + n2 * nu[1]) * r
            for k in range(2):
                e = (1, 0) if k == 0 else (0, 1)
                nk = (n1, n2)[k]
                up = (n1 + e[0], n2 + e[1])
                if up[0] <= n and up[1] <= n:
                    d -= 1j * commutator(SIGMA_X, rho[up])
                if nk > 0:
                    low = rho[n1 - e[0], n2 - e[1]]
                    sign = -1.0 if k == 0 else 1.0
                    d -= 1j * c * nk * (commutator(SIGMA_X, low)
                                        + sign * anticommutator(SIGMA_X, low))
            out[n1, n2] = d
    return HierarchyState(n, out, tau)


def _left(a):
    return np.kron(a, IDENTITY)


def _right(a):
    return np.kron(IDENTITY, a.T)


def ado_scale(n_trunc, gamma0):
    """Per-label factors s_n with rho_n = s_n * rho~_n.

    s_n = prod_k sqrt(n_k! c^n_k); with these the up and down couplings
    become sqrt((n_k+1) c) and sqrt(n_k c), keeping deep ADOs O(1).
    """
    c = coupling_prefactor(gamma0)
    ks = np.arange(n_trunc + 1)
    logf = np.array([math.lgamma(k + 1) for k in ks])
    if c == 0:
        s1 = np.where(ks == 0, 1.0, 0.0)
    else:
        s1 = np.exp(0.5 * (logf + ks * math.log(c)))
    return np.outer(s1, s1)


def heom_generator(params, n_trunc):
    """Sparse static generator on rescaled ADOs, plus the driving pattern.

    Returns ``(L0, pattern)`` such that
    ``d y/dtau = L0 @ y - i delta cos(omega_d tau) * pattern * y``, where
    ``y`` stacks the row-major flattened rescaled ADOs, label (n1, n2) at
    block ``n1 * (N + 1) + n2``.
    """
    n = n_trunc
    size = (n + 1) ** 2
    c = coupling_prefactor(params.gamma0)
    nu = bath_rates(params.omega0)
    p_comm = _left(EXCITED_PROJECTOR) - _right(EXCITED_PROJECTOR)
    sx_comm = _left(SIGMA_X) - _right(SIGMA_X)
    sx_anti = _left(SIGMA_X) + _right(SIGMA_X)
    down = (sx_comm - sx_anti, sx_comm + sx_anti)

    diag_blocks = []
    rows, cols, blocks = [], [], []
    for n1 in range(n + 1):
        for n2 in range(n + 1):
            i = n1 * (n + 1) + n2
            diag_blocks.append(-1j * params.omega0 * p_comm
                               - (n1 * nu[0] + n2 * nu[1]) * np.eye(4))
            for k in range(2):
                nk = (n1, n2)[k]
                step = (n + 1) if k == 0 else 1
                if nk < n:
                    rows.append(i)
                    cols.append(i + step)
                    blocks.append(-1j * math.sqrt((nk + 1) * c) * sx_comm)
                if nk > 0:
                    rows.append(i)
                    cols.append(i - step)
                    blocks.append(-1j * math.sqrt(nk * c) * down[k])
    gen = sp.block_diag(diag_blocks, format="csr")
    if blocks:
        off = sp.bsr_matrix(
            (np.array(blocks), np.array(cols),
             np.searchsorted(np.array(rows), np.arange(size + 1))),
            shape=(4 * size, 4 * size))
        gen = (gen + off).tocsr()
    gen.sort_indices()
    pattern = np.tile(np.diag(p_comm).real, size)
    return gen, pattern


def heom_system(params, n_trunc):
    gen, pattern = heom_generator(params, n_trunc)
    return LinearSystem(gen, -1j * params.delta * pattern, params.omega_d)


@dataclass(frozen=True)
class HeomTrajectory:
    params: object
    n_trunc: int
    tau: np.ndarray
    states: np.ndarray  # (n, 2, 2) physical reduced states

    @property
    def trace_error(self):
        return np.abs(self.states[:, 0, 0] + self.states[:, 1, 1] - 1.0)

    @property
    def min_eigenvalues(self):
        return np.array([min_eigenvalue(r) for r in self.states])


def solve_heom(rho0, params, cfg=None):
    """Propagate the hierarchy from ``rho0`` (all other ADOs zero).

    Returns the physical state on the uniform output grid.

    Raises
    ------
    IntegrationError
        If the stepper fails; the message names the parameter point and N.
    """
    cfg = cfg or HeomConfig()
    rho0 = check_density(rho0)
    n = cfg.n_trunc
    system = heom_system(params, n)
    y0 = np.zeros(system.drive.shape[0], dtype=complex)
    y0[:4] = rho0.reshape(-1)
    tau = uniform_grid(cfg.tau_max, cfg.dtau)
    ys, status, _ = integrate(system, y0, tau, cfg.rtol, cfg.atol,
                              cfg.max_steps)
    check_status(status, f"{params.label()}, N={n}")
    states = ys[:, :4].reshape(-1, 2, 2)
    # the generator preserves Hermiticity exactly; remove round-off drift
    states = 0.5 * (states + states.conj().transpose(0, 2, 1))
    return HeomTrajectory(params, n, tau, states)


def solve_heom_pair(params, cfg=None, pair=None):
    """Evolve an initial pair (default: sigma_x eigenstates) and measure D."""
    cfg = cfg or HeomConfig()
    r1, r2 = pair if pair is not None else plus_x_pair()
    t1 = solve_heom(r1, params, cfg)
    t2 = solve_heom(r2, params, cfg)
    d = trace_distance_series(t1.states, t2.states)
    # overshoot within integrator accuracy is clipped, larger is a failure
    if np.any(d > 1 + TRACE_TOL):
        raise IntegrationError(
            f"trace distance above 1 at {params.label()}, N={cfg.n_trunc}")
    traj = Trajectory(t1.tau, np.clip(d, 0.0, 1.0), engine="heom",
                      params=params, meta={"n_trunc": cfg.n_trunc})
    return traj, (t1, t2)


@dataclass(frozen=True)
class ConvergenceReport:
    n_list: tuple
    deltas: tuple
    converged: bool


def convergence_check(params, cfg=None, n_list=(8, 10, 12), pair=None):
    """Sup-norm change of D(tau) between consecutive truncation depths."""
    cfg = cfg or HeomConfig()
    n_list = tuple(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be increasing")
    ds = []
    for n in n_list:
        c = HeomConfig(n_trunc=n, rtol=cfg.rtol, atol=cfg.atol,
                       dtau=cfg.dtau, tau_max=cfg.tau_max,
                       max_steps=cfg.max_steps)
        ds.append(solve_heom_pair(params, c, pair)[0].distance)
    deltas = tuple(float(np.max(np.abs(a - b))) for a, b in zip(ds, ds[1:]))
    return ConvergenceReport(n_list, deltas,
                             bool(deltas) and deltas[-1] < CONVERGED_DELTA)
