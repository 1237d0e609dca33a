"""
Energy-sorting VQE with a Trotterized UCCSD ansatz on a simulated statevector.

Workflow: build the singles/doubles pool over the Hartree-Fock reference,
rank every operator by the energy it gains alone, keep those above epsilon,
optimize all kept angles together, then measure the RDMs.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from integrals import IntegralSet, transform_one_body, transform_two_body
from meanfield import DegenerateOrbitalsError, ScfConvergenceError, run_rhf
from qubits import (ANNIHILATE, CREATE, FermionOperator, PauliSum, PauliTerm, Statevector,
                    apply_pauli_exponential, apply_pauli_sum, expand_to_spin_orbitals,
                    expectation, jordan_wigner)
from rdm import RdmPair, rotate_rdms, spin_trace

logger = logging.getLogger(__name__)

# accepted as converged when the optimizer stops on a line-search failure
GRADIENT_ACCEPT = 1e-5


@dataclass(frozen=True)
class VqeConfig:
    epsilon: float = 1e-5
    optimizer_tol: float = 1e-7
    max_evals: int = 20000
    bracket: float = np.pi
    screen_grid: int = 64
    theta_tol: float = 1e-8
    fd_step: float = 1e-6
    analytic_gradient: bool = False
    fine_tune: bool = False
    fine_tune_tol: float = 1e-6

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        if self.bracket <= 0:
            raise ValueError(f"bracket must be positive, got {self.bracket}")


@dataclass(frozen=True, order=True)
class ExcitationOp:
    """a+_p a_r (single) or a+_p a+_q a_r a_s (double) over spin orbitals"""

    creators: Tuple[int, ...]
    annihilators: Tuple[int, ...]

    @classmethod
    def single(cls, p: int, r: int) -> 'ExcitationOp':
        return cls((p,), (r,))

    @classmethod
    def double(cls, p: int, q: int, r: int, s: int) -> 'ExcitationOp':
        if not (p > q and r > s):
            raise ValueError(f"double excitation needs p>q and r>s, got {(p, q, r, s)}")
        return cls((p, q), (r, s))

    @property
    def kind(self) -> str:
        return 'single' if len(self.creators) == 1 else 'double'

    @property
    def indices(self) -> Tuple[int, ...]:
        return self.creators + self.annihilators

    def fermion_operator(self) -> FermionOperator:
        ladder = tuple((i, CREATE) for i in self.creators) + tuple((i, ANNIHILATE) for i in self.annihilators)
        return FermionOperator([(1.0, ladder)])

    def __str__(self):
        return f"{self.kind}{self.indices}"


def compile_generator(op: ExcitationOp) -> Tuple[Tuple[PauliTerm, float], ...]:
    """
    JW image of T - T+ written as i * sum_k c_k P_k with real c_k, so that
    exp(theta (T - T+)) = prod_k exp(i theta c_k P_k).
    """
    t = op.fermion_operator()
    generator = jordan_wigner(t - t.hermitian_conjugate())
    compiled = []
    for term, coefficient in sorted(generator.terms.items()):
        if abs(coefficient.real) > 1e-12:
            raise ValueError(f"Generator of {op} is not anti-Hermitian")
        compiled.append((term, float(coefficient.imag)))
    return tuple(compiled)


def _apply_generator_exponential(psi: Statevector, compiled, theta: float) -> Statevector:
    for pauli, c in compiled:
        psi = apply_pauli_exponential(psi, pauli, theta * c)
    return psi


@dataclass(frozen=True)
class AnsatzState:
    ops: Tuple[ExcitationOp, ...]
    thetas: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, 'ops', tuple(self.ops))
        object.__setattr__(self, 'thetas', tuple(float(t) for t in self.thetas))
        if len(self.ops) != len(self.thetas):
            raise ValueError(f"{len(self.ops)} operators but {len(self.thetas)} angles")

    @cached_property
    def compiled(self):
        return tuple(compile_generator(op) for op in self.ops)


def hf_reference(n_qubits: int, n_electrons: int) -> Statevector:
    if not 0 <= n_electrons <= n_qubits:
        raise ValueError(f"{n_electrons} electrons overfill {n_qubits} spin orbitals")
    return Statevector.basis_state(n_qubits, (1 << n_electrons) - 1)


def build_pool(n_spatial_emb: int, n_electrons: int) -> List[ExcitationOp]:
    """All S_z-conserving singles then doubles above the lowest-filled reference"""
    if n_electrons % 2:
        raise ValueError(f"Closed-shell reference needs an even electron count, got {n_electrons}")
    n_modes = 2 * n_spatial_emb
    occupied = range(n_electrons)
    virtual = range(n_electrons, n_modes)

    pool = []
    for r in occupied:
        for p in virtual:
            if p % 2 == r % 2:
                pool.append(ExcitationOp.single(p, r))
    for s in occupied:
        for r in occupied:
            if r <= s:
                continue
            for q in virtual:
                for p in virtual:
                    if p <= q:
                        continue
                    if (p % 2) + (q % 2) == (r % 2) + (s % 2):
                        pool.append(ExcitationOp.double(p, q, r, s))
    return pool


def apply_ansatz(ref: Statevector, ansatz: AnsatzState) -> Statevector:
    psi = ref
    for compiled, theta in zip(ansatz.compiled, ansatz.thetas):
        psi = _apply_generator_exponential(psi, compiled, theta)
    return Statevector(psi.amplitudes / np.linalg.norm(psi.amplitudes), psi.n_qubits)


# ============================================================================
# Energy sorting
# ============================================================================

class ScreenedEntry(NamedTuple):
    delta_e: float
    op: ExcitationOp
    theta_opt: float


@dataclass
class ScreenedPool:
    reference_energy: float
    entries: List[ScreenedEntry] = field(default_factory=list)
    rejected: List[ScreenedEntry] = field(default_factory=list)

    @property
    def ops(self) -> List[ExcitationOp]:
        return [e.op for e in self.entries]

    @property
    def thetas(self) -> List[float]:
        return [e.theta_opt for e in self.entries]


def _single_parameter_minimum(energy: Callable[[float], float], e_ref: float,
                              cfg: VqeConfig) -> Tuple[float, float]:
    grid = np.linspace(-cfg.bracket, cfg.bracket, cfg.screen_grid + 1)
    values = [energy(theta) for theta in grid]
    best = int(np.argmin(values))
    step = grid[1] - grid[0]
    lower = max(-cfg.bracket, grid[best] - step)
    upper = min(cfg.bracket, grid[best] + step)
    refined = minimize_scalar(energy, bounds=(lower, upper), method='bounded',
                              options={'xatol': cfg.theta_tol})
    theta, value = float(refined.x), float(refined.fun)
    if values[best] < value:
        theta, value = float(grid[best]), float(values[best])
    if e_ref <= value:
        return 0.0, e_ref
    return theta, value


def screen_pool(pool: Sequence[ExcitationOp], h: PauliSum, ref: Statevector, epsilon: float,
                cfg: Optional[VqeConfig] = None, log=None) -> ScreenedPool:
    """Rank operators by their one-parameter energy gain and keep |dE| > epsilon"""
    cfg = cfg or VqeConfig()
    e_ref = expectation(h, ref)
    scored = []
    for op in pool:
        compiled = compile_generator(op)

        def energy(theta, compiled=compiled):
            return expectation(h, _apply_generator_exponential(ref, compiled, theta))

        theta, e_min = _single_parameter_minimum(energy, e_ref, cfg)
        scored.append(ScreenedEntry(e_min - e_ref, op, theta))

    scored.sort(key=lambda e: (-abs(e.delta_e), e.op.indices))
    screened = ScreenedPool(reference_energy=e_ref)
    for entry in scored:
        keep = epsilon == 0 or abs(entry.delta_e) > epsilon
        (screened.entries if keep else screened.rejected).append(entry)

    if log is not None:
        log.record('screen', reference_energy=e_ref, epsilon=epsilon,
                   table=[{'op': list(e.op.indices), 'delta_e': e.delta_e, 'theta': e.theta_opt,
                           'kept': e in screened.entries} for e in scored])
    logger.debug(f"Screening kept {len(screened.entries)} of {len(scored)} operators (epsilon={epsilon})")
    return screened


# ============================================================================
# Optimization
# ============================================================================

class VqeOutcome(NamedTuple):
    energy: float
    thetas: np.ndarray
    evaluations: int
    converged: bool
    gradient_norm: float


class _BudgetExhausted(Exception):
    pass


def energy_gradient(h: PauliSum, ref: Statevector, ansatz: AnsatzState) -> np.ndarray:
    """dE/dtheta_k = 2 Re <lambda_k| G_k |phi_k> by one reverse sweep"""
    psi = apply_ansatz(ref, ansatz)
    bra = Statevector(apply_pauli_sum(h, psi), psi.n_qubits)
    ket = psi
    gradient = np.zeros(len(ansatz.ops))
    for k in range(len(ansatz.ops) - 1, -1, -1):
        compiled = ansatz.compiled[k]
        generator = PauliSum({pauli: 1j * c for pauli, c in compiled})
        gradient[k] = 2.0 * np.real(np.vdot(bra.amplitudes, apply_pauli_sum(generator, ket)))
        ket = _apply_generator_exponential(ket, compiled, -ansatz.thetas[k])
        bra = _apply_generator_exponential(bra, compiled, -ansatz.thetas[k])
    return gradient


def vqe_minimize(h: PauliSum, ref: Statevector, ansatz_ops: Sequence[ExcitationOp],
                 theta0: Sequence[float], cfg: Optional[VqeConfig] = None, log=None) -> VqeOutcome:
    """
    L-BFGS-B over the ansatz angles, bounded to [-bracket, bracket].

    Every energy evaluation (including finite-difference probes) counts
    against cfg.max_evals; when the budget runs out the best point seen so
    far is returned with converged=False.
    """
    cfg = cfg or VqeConfig()
    ops = tuple(ansatz_ops)
    theta0 = np.asarray(theta0, dtype=float)
    if len(ops) != len(theta0):
        raise ValueError(f"{len(ops)} operators but {len(theta0)} initial angles")
    if not ops:
        return VqeOutcome(expectation(h, ref), np.zeros(0), 1, True, 0.0)

    compiled = tuple(compile_generator(op) for op in ops)
    state = {'evaluations': 0, 'best_energy': np.inf, 'best_thetas': theta0.copy(), 'iteration': 0}

    def ansatz_at(thetas):
        ansatz = AnsatzState(ops, thetas)
        ansatz.__dict__['compiled'] = compiled
        return ansatz

    def energy(thetas):
        if state['evaluations'] >= cfg.max_evals:
            raise _BudgetExhausted()
        state['evaluations'] += 1
        value = expectation(h, apply_ansatz(ref, ansatz_at(thetas)))
        if value < state['best_energy']:
            state['best_energy'] = value
            state['best_thetas'] = np.array(thetas, dtype=float)
        return value

    def gradient(thetas):
        if cfg.analytic_gradient:
            return energy_gradient(h, ref, ansatz_at(thetas))
        g = np.zeros(len(thetas))
        for k in range(len(thetas)):
            shifted = np.array(thetas, dtype=float)
            shifted[k] += cfg.fd_step
            forward = energy(shifted)
            shifted[k] -= 2 * cfg.fd_step
            backward = energy(shifted)
            g[k] = (forward - backward) / (2 * cfg.fd_step)
        return g

    def callback(thetas):
        state['iteration'] += 1
        if log is not None:
            log.record('vqe', iteration=state['iteration'], energy=state['best_energy'],
                       evaluations=state['evaluations'])

    converged = False
    try:
        result = minimize(energy, theta0, jac=gradient, method='L-BFGS-B',
                          bounds=[(-cfg.bracket, cfg.bracket)] * len(ops),
                          callback=callback,
                          options={'ftol': 1e-15, 'gtol': cfg.optimizer_tol, 'maxfun': cfg.max_evals})
        converged = bool(result.success)
        if not converged:
            logger.debug(f"L-BFGS-B stopped: {result.message}")
    except _BudgetExhausted:
        logger.warning(f"VQE evaluation budget of {cfg.max_evals} exhausted, returning best point")

    best = state['best_thetas']
    try:
        gradient_norm = float(np.max(np.abs(energy_gradient(h, ref, ansatz_at(best)))))
    except _BudgetExhausted:
        gradient_norm = float('nan')
    if not converged and state['evaluations'] < cfg.max_evals and gradient_norm < GRADIENT_ACCEPT:
        converged = True

    if log is not None:
        log.record('vqe', iteration=state['iteration'], energy=state['best_energy'],
                   evaluations=state['evaluations'], gradient_norm=gradient_norm, converged=converged)
    return VqeOutcome(float(state['best_energy']), best, state['evaluations'], converged, gradient_norm)


# ============================================================================
# Measurement
# ============================================================================

def measure_rdms(psi: Statevector, n_spatial_emb: int) -> RdmPair:
    """Spin-traced RDMs from expectations of JW-mapped ladder products"""
    m = 2 * n_spatial_emb
    cache = {}

    def measure(ladder) -> float:
        total = 0.0
        for term, coefficient in jordan_wigner(FermionOperator([(1.0, ladder)])).terms.items():
            if term not in cache:
                cache[term] = np.vdot(psi.amplitudes, psi.apply_pauli(term))
            total += coefficient * cache[term]
        return float(np.real(total))

    one_so = np.zeros((m, m))
    for p in range(m):
        for q in range(p, m):
            if p % 2 != q % 2:
                continue
            one_so[p, q] = one_so[q, p] = measure(((p, CREATE), (q, ANNIHILATE)))

    two_so = np.zeros((m, m, m, m))
    for p in range(m):
        for q in range(p):
            for r in range(m):
                for s in range(r):
                    if (p % 2) + (q % 2) != (r % 2) + (s % 2):
                        continue
                    value = measure(((p, CREATE), (q, CREATE), (r, ANNIHILATE), (s, ANNIHILATE)))
                    two_so[p, q, r, s] = two_so[q, p, s, r] = value
                    two_so[q, p, r, s] = two_so[p, q, s, r] = -value
    return spin_trace(one_so, two_so)


# ============================================================================
# Solver
# ============================================================================

class EsvqeResult(NamedTuple):
    energy: float
    rdms: RdmPair
    n_qubits: int
    screened: ScreenedPool
    outcome: VqeOutcome


def _reference_orbitals(ints: IntegralSet) -> np.ndarray:
    try:
        return run_rhf(ints).coefficients
    except (ScfConvergenceError, DegenerateOrbitalsError) as e:
        logger.warning(f"Embedded RHF unavailable ({e}); using core-Hamiltonian orbitals as reference")
        return np.linalg.eigh(ints.one_body)[1]


def _fine_tune(h, ref, screened: ScreenedPool, outcome: VqeOutcome, cfg: VqeConfig, log):
    ops = list(screened.ops)
    thetas = list(outcome.thetas)
    for entry in list(screened.rejected):
        candidate = vqe_minimize(h, ref, ops + [entry.op], thetas + [entry.theta_opt], cfg, log)
        gain = outcome.energy - candidate.energy
        ops.append(entry.op)
        thetas = list(candidate.thetas)
        screened.entries.append(entry)
        screened.rejected.remove(entry)
        logger.debug(f"Fine-tuning added {entry.op}, energy gain {gain:.3e}")
        outcome = candidate
        if gain < cfg.fine_tune_tol:
            break
    return outcome


def run_esvqe(ints: IntegralSet, cfg: Optional[VqeConfig] = None, log=None) -> EsvqeResult:
    """
    Solve an embedded problem with ESVQE.

    The problem is first rotated into its canonical RHF orbitals so that the
    lowest-filled determinant is the Hartree-Fock reference. RDMs are rotated
    back into the input basis.
    """
    cfg = cfg or VqeConfig()
    c = _reference_orbitals(ints)
    mo_ints = IntegralSet(
        n_spatial=ints.n_spatial,
        n_electrons=ints.n_electrons,
        core_energy=ints.core_energy,
        one_body=transform_one_body(ints.one_body, c),
        two_body=transform_two_body(ints.two_body, c),
    )
    n_qubits = 2 * ints.n_spatial
    h = jordan_wigner(expand_to_spin_orbitals(mo_ints))
    ref = hf_reference(n_qubits, ints.n_electrons)

    pool = build_pool(ints.n_spatial, ints.n_electrons)
    screened = screen_pool(pool, h, ref, cfg.epsilon, cfg, log)
    theta0 = [theta * 0.5 ** k for k, theta in enumerate(screened.thetas)]
    outcome = vqe_minimize(h, ref, screened.ops, theta0, cfg, log)
    if cfg.fine_tune and screened.rejected:
        outcome = _fine_tune(h, ref, screened, outcome, cfg, log)

    psi = apply_ansatz(ref, AnsatzState(screened.ops, outcome.thetas))
    rdms = rotate_rdms(measure_rdms(psi, ints.n_spatial), c)
    logger.debug(f"ESVQE: {len(screened.ops)}/{len(pool)} operators, E={outcome.energy:.10f}, "
                 f"{outcome.evaluations} evaluations")
    return EsvqeResult(outcome.energy, rdms, n_qubits, screened, outcome)
