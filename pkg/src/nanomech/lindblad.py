"""Lindblad generators for the driven nonlinear optomechanical system:
the full multi-mode master equation and the reduced Fock-resolved
birth-death model, with steady-state solvers and time evolution.

Vectorization is column-stacking: vec(A X B) = (B^T kron A) vec(X).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .fock import (CompositeSpace, DensityMatrix, FockOperator, FockSpace,
                   annihilation, creation, fock_transition, identity, lift,
                   number)

TRACE_PRESERVATION_TOL = 1e-10
DEFAULT_NNZ_CAP = 200_000_000
DENSE_DIM_LIMIT = 128


class SolverError(RuntimeError):
    """Steady-state or time-evolution failure."""


class DegenerateSteadyStateError(SolverError):
    """The generator has a (numerically) non-unique null space."""


class TruncationError(SolverError):
    """Population tail does not decay within the available levels."""


class StiffnessError(SolverError):
    """Explicit integrator underflowed; use the steady-state solver."""


@dataclass(frozen=True)
class LaserParams:
    """Per-laser quantities the generators need."""

    g: complex                  # enhanced coupling, rad/s
    detuning: float             # rad/s


@dataclass(frozen=True)
class SystemConfig:
    """Mode structure and physical rates for generator construction."""

    mech_dim: int
    cavity_dims: tuple[int, ...]
    omega_m_prime: float
    lam: float
    gamma_m: float
    n_bar: float
    kappa: float
    lasers: tuple[LaserParams, ...]
    include_reduced_shifts: bool = False

    def __post_init__(self):
        if self.mech_dim < 3:
            raise ValueError(f"mech truncation must be >= 3, got {self.mech_dim}")
        if any(d < 2 for d in self.cavity_dims):
            raise ValueError("cavity truncations must be >= 2")
        if self.cavity_dims and len(self.cavity_dims) != len(self.lasers):
            raise ValueError("one cavity mode per laser required")

    @classmethod
    def from_derived(cls, derived, mech_dim: int, cavity_dim: int = 2,
                     include_reduced_shifts: bool = False) -> "SystemConfig":
        lasers = tuple(LaserParams(g=l.g, detuning=l.detuning)
                       for l in derived.lasers)
        return cls(mech_dim=mech_dim,
                   cavity_dims=(cavity_dim,) * len(lasers),
                   omega_m_prime=derived.omega_m_prime, lam=derived.lam,
                   gamma_m=derived.gamma_m, n_bar=derived.n_bar,
                   kappa=derived.kappa, lasers=lasers,
                   include_reduced_shifts=include_reduced_shifts)

    def space(self) -> CompositeSpace:
        factors = [FockSpace(self.mech_dim, "mech")]
        factors += [FockSpace(d, f"cav{j}") for j, d in enumerate(self.cavity_dims)]
        return CompositeSpace(tuple(factors))

    def delta_n(self, n: int) -> float:
        return self.omega_m_prime + self.lam * (n - 1)


@dataclass(frozen=True)
class Liouvillian:
    space: CompositeSpace
    superoperator: sp.csr_matrix = field(repr=False)
    kind: str                   # "full" | "reduced-population"

    @property
    def dim(self) -> int:
        return self.superoperator.shape[0]

    def trace_preservation_defect(self) -> float:
        """Norm of L^dagger applied to the identity (should vanish)."""
        if self.kind == "reduced-population":
            colsum = np.asarray(self.superoperator.sum(axis=0)).ravel()
            return float(np.max(np.abs(colsum)))
        d = self.space.total_dim
        vec_id = np.eye(d, dtype=complex).reshape(-1, order="F")
        defect = self.superoperator.conj().T @ vec_id
        return float(np.max(np.abs(defect)))

    def dump_coo(self, path):
        coo = self.superoperator.tocoo()
        with open(path, "w") as fh:
            fh.write("# row col re im\n")
            for r, c, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")


@dataclass(frozen=True)
class SteadyState:
    rho: DensityMatrix | None
    populations: np.ndarray | None
    residual: float
    method: str
    iterations: int = 0

    def mechanical_populations(self) -> np.ndarray:
        if self.populations is not None:
            return self.populations
        from .fock import partial_trace
        return partial_trace(self.rho, 0).populations()


@dataclass(frozen=True)
class RateTable:
    """Cavity-induced transition rates A+-[n][j] for n = 1..n_max."""

    a_plus: np.ndarray          # shape (n_max, n_lasers)
    a_minus: np.ndarray
    delta: np.ndarray           # shape (n_max,)

    @property
    def n_max(self) -> int:
        return self.a_plus.shape[0]

    def total_plus(self, n: int) -> float:
        return float(self.a_plus[n - 1].sum())

    def total_minus(self, n: int) -> float:
        return float(self.a_minus[n - 1].sum())


# ---------------------------------------------------------------------------
# generator construction

def mechanical_hamiltonian(config: SystemConfig) -> sp.csr_matrix:
    """Single-mode anharmonic part w_m' n + (lam/2) n (n - 1), diagonal."""
    n = np.arange(config.mech_dim, dtype=float)
    diag = config.omega_m_prime * n + 0.5 * config.lam * n * (n - 1)
    return sp.diags(diag.astype(complex), format="csr")


def build_full_hamiltonian(config: SystemConfig) -> FockOperator:
    """Multi-mode Hamiltonian (in units of hbar): detuned cavities, the
    anharmonic mechanical mode, and the displaced linear coupling."""
    space = config.space()
    mech = space.factors[0]
    b = lift(annihilation(mech), space, 0)
    x = b + b.dagger()
    h = FockOperator(space, sp.csr_matrix(
        (space.total_dim, space.total_dim), dtype=complex))
    h = h + lift(FockOperator(mech, mechanical_hamiltonian(config)), space, 0)
    for j, laser in enumerate(config.lasers):
        cav = space.factors[1 + j]
        a = lift(annihilation(cav), space, 1 + j)
        h = h + (-laser.detuning) * lift(number(cav), space, 1 + j)
        coupling = (np.conj(laser.g) / 2.0) * a + (laser.g / 2.0) * a.dagger()
        h = h + coupling @ x
    herm_defect = abs(h.matrix - h.matrix.conj().T).max()
    if herm_defect > 1e-12 * max(1.0, abs(h.matrix).max()):
        raise SolverError(f"Hamiltonian not Hermitian, defect {herm_defect:.3e}")
    return h


def _dissipator_super(c: sp.spmatrix, rate: float) -> sp.csr_matrix:
    """rate * [c . c^dag - (c^dag c . + . c^dag c)/2] in column-stacked form."""
    d = c.shape[0]
    eye = sp.identity(d, dtype=complex, format="csr")
    cdc = (c.conj().T @ c).tocsr()
    out = sp.kron(c.conj(), c, format="csr")
    out = out - 0.5 * sp.kron(eye, cdc, format="csr")
    out = out - 0.5 * sp.kron(cdc.T, eye, format="csr")
    return (rate * out).tocsr()


def _estimate_nnz(config: SystemConfig) -> int:
    d = config.space().total_dim
    # commutator and dissipator terms each contribute O(d * nnz_per_row * d)
    return 8 * d * d * (2 + len(config.cavity_dims))


def build_full_liouvillian(config: SystemConfig,
                           nnz_cap: int = DEFAULT_NNZ_CAP) -> Liouvillian:
    """Sparse superoperator for the full master equation: coherent part plus
    cavity decay and the thermal mechanical dissipator."""
    est = _estimate_nnz(config)
    if est > nnz_cap:
        raise MemoryError(
            f"estimated superoperator nonzeros {est} exceed cap {nnz_cap}")
    space = config.space()
    d = space.total_dim
    h = build_full_hamiltonian(config).matrix
    eye = sp.identity(d, dtype=complex, format="csr")
    lsuper = -1j * (sp.kron(eye, h, format="csr") - sp.kron(h.T, eye, format="csr"))

    for j in range(len(config.cavity_dims)):
        a = lift(annihilation(space.factors[1 + j]), space, 1 + j).matrix
        lsuper = lsuper + _dissipator_super(a, config.kappa)

    b = lift(annihilation(space.factors[0]), space, 0).matrix
    if config.gamma_m > 0:
        lsuper = lsuper + _dissipator_super(b, config.gamma_m * (config.n_bar + 1.0))
        if config.n_bar > 0:
            lsuper = lsuper + _dissipator_super(
                b.conj().T.tocsr(), config.gamma_m * config.n_bar)

    liou = Liouvillian(space, lsuper.tocsr(), "full")
    defect = liou.trace_preservation_defect()
    scale = max(abs(lsuper).max(), 1.0)
    if defect > TRACE_PRESERVATION_TOL * scale:
        raise SolverError(f"generator is not trace preserving: defect {defect:.3e}")
    return liou


def transition_rates(config: SystemConfig, n_max: int | None = None) -> RateTable:
    """Lorentzian phonon-adding/removing rates
    A+-[n][j] = |g_j|^2 kappa / [4 (Delta_j -+ delta_n)^2 + kappa^2]."""
    if n_max is None:
        n_max = config.mech_dim - 1
    nj = len(config.lasers)
    a_plus = np.zeros((n_max, nj))
    a_minus = np.zeros((n_max, nj))
    delta = np.array([config.delta_n(n) for n in range(1, n_max + 1)])
    kap = config.kappa
    for j, laser in enumerate(config.lasers):
        g2k = abs(laser.g) ** 2 * kap
        a_plus[:, j] = g2k / (4.0 * (laser.detuning - delta) ** 2 + kap**2)
        a_minus[:, j] = g2k / (4.0 * (laser.detuning + delta) ** 2 + kap**2)
    return RateTable(a_plus=a_plus, a_minus=a_minus, delta=delta)


def birth_death_rates(config: SystemConfig, n_max: int | None = None):
    """Up/down rates of the population chain: the n -> n+1 rate is
    (n+1) [sum_j A+^(n+1) + gamma n_bar], the n -> n-1 rate is
    n [sum_j A-^n + gamma (n_bar + 1)]."""
    if n_max is None:
        n_max = config.mech_dim - 1
    rates = transition_rates(config, n_max)
    n = np.arange(1, n_max + 1, dtype=float)
    up = n * (rates.a_plus.sum(axis=1) + config.gamma_m * config.n_bar)
    down = n * (rates.a_minus.sum(axis=1) + config.gamma_m * (config.n_bar + 1.0))
    return up, down, rates


def build_reduced_generator(config: SystemConfig) -> Liouvillian:
    """Tridiagonal birth-death generator on the mechanical populations
    (dP/dt = Q P, columns sum to zero)."""
    nm = config.mech_dim
    up, down, _ = birth_death_rates(config, nm - 1)
    q = np.zeros((nm, nm))
    for n in range(1, nm):
        q[n, n - 1] += up[n - 1]       # n-1 -> n
        q[n - 1, n - 1] -= up[n - 1]
        q[n - 1, n] += down[n - 1]     # n -> n-1
        q[n, n] -= down[n - 1]
    space = CompositeSpace((FockSpace(nm, "mech"),))
    return Liouvillian(space, sp.csr_matrix(q, dtype=complex), "reduced-population")


def reduced_frequency_shifts(config: SystemConfig, n_max: int | None = None) -> np.ndarray:
    """Optional diagonal light shifts for coherence dynamics; same Lorentzian
    structure as the rates with a dispersive numerator.  Never enters the
    population dynamics."""
    if n_max is None:
        n_max = config.mech_dim - 1
    delta = np.array([config.delta_n(n) for n in range(1, n_max + 1)])
    shifts = np.zeros(n_max)
    kap = config.kappa
    for laser in config.lasers:
        g2 = abs(laser.g) ** 2
        shifts += (g2 * (laser.detuning - delta)
                   / (4.0 * (laser.detuning - delta) ** 2 + kap**2))
        shifts -= (g2 * (laser.detuning + delta)
                   / (4.0 * (laser.detuning + delta) ** 2 + kap**2))
    return shifts


# ---------------------------------------------------------------------------
# steady-state solvers

def reduced_steady_populations(config: SystemConfig, n_cut: int | None = None,
                               tail_check: bool = True) -> SteadyState:
    """Steady populations from the detailed-balance recursion
    P_n / P_(n-1) = [sum_j A+^n + gamma n_bar] / [sum_j A-^n + gamma (n_bar+1)],
    accumulated in log space and normalized."""
    if n_cut is None:
        n_cut = config.mech_dim - 1
    if n_cut > config.mech_dim - 1:
        raise ValueError("n_cut exceeds available truncation")
    rates = transition_rates(config, n_cut)
    gam = config.gamma_m
    up = rates.a_plus.sum(axis=1) + gam * config.n_bar
    down = rates.a_minus.sum(axis=1) + gam * (config.n_bar + 1.0)
    log_ratios = np.log(up) - np.log(down)
    # persistent growth means the chain has no normalizable tail here
    tail = log_ratios[max(0, n_cut - 3):]
    if tail_check and np.all(tail >= 0):
        raise TruncationError(
            "population ratios do not decay near the truncation; "
            f"last ratios {np.exp(tail)}")
    log_p = np.concatenate([[0.0], np.cumsum(log_ratios)])
    log_p -= log_p.max()
    p = np.exp(log_p)
    p /= p.sum()
    if tail_check and p[n_cut] >= 1e-3 * p.max():
        raise TruncationError(
            f"top-level population {p[n_cut]:.3e} is not negligible "
            f"(max {p.max():.3e}); increase the truncation")
    q = build_reduced_generator(config).superoperator
    residual = float(np.linalg.norm(q @ p.astype(complex)))
    return SteadyState(rho=None, populations=p, residual=residual,
                       method="recursion")


def _steady_vec_dense(lsuper: sp.csr_matrix, d: int, check_unique: bool):
    ld = lsuper.toarray()
    a = ld.copy()
    trace_row = np.zeros(d * d, dtype=complex)
    trace_row[:: d + 1] = 1.0
    a[0, :] = trace_row
    rhs = np.zeros(d * d, dtype=complex)
    rhs[0] = 1.0
    try:
        x = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError:
        raise DegenerateSteadyStateError(
            "trace-constrained system is singular; the generator null "
            "space is not one-dimensional") from None
    if check_unique:
        sv = np.linalg.svd(ld, compute_uv=False)
        scale = sv[0] if sv[0] > 0 else 1.0
        if sv[-2] < 1e-10 * scale:
            raise DegenerateSteadyStateError(
                f"second-smallest singular value {sv[-2]:.3e} "
                f"(scale {scale:.3e}): null space is not one-dimensional")
    return x, 0


def _steady_vec_iterative(lsuper: sp.csr_matrix, d: int, maxiter: int):
    a = lsuper.tolil()
    trace_cols = np.arange(0, d * d, d + 1)
    a[0, :] = 0.0
    a[0, trace_cols] = 1.0
    a = a.tocsc()
    rhs = np.zeros(d * d, dtype=complex)
    rhs[0] = 1.0
    try:
        ilu = spla.spilu(a, drop_tol=1e-10, fill_factor=40)
        prec = spla.LinearOperator(a.shape, ilu.solve)
    except RuntimeError:
        prec = None
    residuals = []

    def cb(xk):
        residuals.append(float(np.linalg.norm(a @ xk - rhs)))

    x, info = spla.lgmres(a, rhs, M=prec, rtol=1e-12, atol=1e-14,
                          maxiter=maxiter, callback=cb)
    if info != 0:
        raise SolverError(
            f"iterative steady-state solve did not converge (info={info}); "
            f"residual history tail {residuals[-5:]}")
    return x, len(residuals)


def steady_state_solve(liou: Liouvillian, method: str = "auto",
                       check_unique: bool | None = None,
                       maxiter: int = 2000) -> SteadyState:
    """Null-space steady state of a generator.

    Full generators: solve L x = 0 with the trace constraint replacing one
    row, densely (total_dim <= 128) or by preconditioned Krylov iteration.
    Reduced generators: dense null vector of the rate matrix.
    """
    if liou.kind == "reduced-population":
        q = liou.superoperator.toarray().real
        nm = q.shape[0]
        a = q.copy()
        a[0, :] = 1.0
        rhs = np.zeros(nm)
        rhs[0] = 1.0
        p = np.linalg.solve(a, rhs)
        p = np.clip(p, 0.0, None)
        p /= p.sum()
        residual = float(np.linalg.norm(q @ p))
        return SteadyState(rho=None, populations=p, residual=residual,
                           method="null-space")

    d = liou.space.total_dim
    if method == "auto":
        method = "dense" if d <= DENSE_DIM_LIMIT else "iterative"
    if check_unique is None:
        check_unique = d * d <= 1600
    if method == "dense":
        x, its = _steady_vec_dense(liou.superoperator, d, check_unique)
    elif method == "iterative":
        x, its = _steady_vec_iterative(liou.superoperator, d, maxiter)
    else:
        raise ValueError(f"unknown method {method!r}")

    rho = x.reshape((d, d), order="F")
    rho = (rho + rho.conj().T) / 2.0
    rho /= np.trace(rho).real
    w, v = np.linalg.eigh(rho)
    if w.min() < -1e-8:
        raise SolverError(
            f"steady state has negative eigenvalue {w.min():.3e}")
    w = np.clip(w, 0.0, None)
    rho = (v * w) @ v.conj().T
    rho /= np.trace(rho).real
    vec = rho.reshape(-1, order="F")
    residual = float(np.linalg.norm(liou.superoperator @ vec))
    dm = DensityMatrix(liou.space, rho)
    return SteadyState(rho=dm, populations=None, residual=residual,
                       method=method, iterations=its)


# ---------------------------------------------------------------------------
# time evolution

def time_evolve(liou: Liouvillian, rho0: DensityMatrix, t_final: float,
                tolerance: float = 1e-10, n_samples: int = 20):
    """Adaptive integration of the vectorized master equation; returns
    (times, [DensityMatrix]).  Trace drift beyond 1e-8 raises."""
    d = liou.space.total_dim
    lsuper = liou.superoperator
    y0 = rho0.matrix.reshape(-1, order="F")

    def rhs(_t, y):
        return lsuper @ y

    t_eval = np.linspace(0.0, t_final, n_samples)
    sol = solve_ivp(rhs, (0.0, t_final), y0, method="RK45",
                    t_eval=t_eval, rtol=tolerance, atol=tolerance * 1e-2)
    if not sol.success:
        raise StiffnessError(
            f"integrator failed ({sol.message}); the generator is likely stiff, "
            "use steady_state_solve instead")
    states = []
    for k in range(sol.y.shape[1]):
        m = sol.y[:, k].reshape((d, d), order="F")
        drift = abs(np.trace(m).real - 1.0)
        if drift > 1e-8:
            raise SolverError(f"trace drift {drift:.3e} during evolution")
        states.append(DensityMatrix(liou.space, m))
    return sol.t, states
