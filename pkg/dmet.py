"""
Density matrix embedding: bath construction, embedding Hamiltonians, the
global chemical-potential loop, correlation-potential fitting and democratic
energy evaluation.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from fci import fci_ground_state
from integrals import IntegralSet, transform_one_body, transform_two_body
from meanfield import CorrelationPotential, MeanFieldState, ScfSettings, coulomb_exchange, run_rhf
from rdm import RdmPair, RdmError
from vqe import VqeConfig, run_esvqe

logger = logging.getLogger(__name__)

MODES = ('single_shot', 'active_space', 'correlation_fitting')
SOLVERS = ('fci', 'esvqe')
STALL_SLOPE = 1e-12
RDM_TOL = 1e-6


class PartitionError(ValueError):
    """Fragments overlap, leave orbitals unowned or index outside the basis"""
    pass


class EmbeddingError(ValueError):
    """Bath or embedding Hamiltonian cannot be built for this fragment"""
    pass


class ChemicalPotentialStallError(RuntimeError):
    """Electron count does not respond to the chemical potential"""

    def __init__(self, message: str, trace: List[Tuple[float, float]]):
        self.trace = trace
        super().__init__(message)


class FragmentSolveError(RuntimeError):
    def __init__(self, fragment_index: int, cause: Exception):
        self.fragment_index = fragment_index
        super().__init__(f"Fragment {fragment_index} solve failed: {cause}")


# ============================================================================
# Types
# ============================================================================

@dataclass(frozen=True)
class DmetConfig:
    tau: float = 1e-5
    eta: float = 1e-6
    mu_max_iter: int = 50
    mu_step: float = 1e-4
    gamma: float = 1.0
    mode: str = 'single_shot'
    fit_max_iter: int = 50
    fit_tol: float = 1e-8
    workers: int = 1
    scf: ScfSettings = field(default_factory=ScfSettings)

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not 0 < self.eta < 1:
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mu_max_iter < 0:
            raise ValueError(f"mu_max_iter must be non-negative, got {self.mu_max_iter}")
        if self.workers < 1:
            raise ValueError(f"workers must be at least 1, got {self.workers}")
        if self.mu_step <= 0:
            raise ValueError(f"mu_step must be positive, got {self.mu_step}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        if self.fit_max_iter < 1:
            raise ValueError(f"fit_max_iter must be at least 1, got {self.fit_max_iter}")
        if self.fit_tol <= 0:
            raise ValueError(f"fit_tol must be positive, got {self.fit_tol}")


@dataclass(frozen=True)
class FragmentPartition:
    """Fragment orbital sets and, per fragment, orbitals kept at mean-field level"""

    fragments: Tuple[Tuple[int, ...], ...]
    inactive: Tuple[Tuple[int, ...], ...] = ()

    def __post_init__(self):
        fragments = tuple(tuple(sorted(int(i) for i in f)) for f in self.fragments)
        inactive = tuple(tuple(sorted(int(i) for i in f)) for f in self.inactive) or tuple(() for _ in fragments)
        object.__setattr__(self, 'fragments', fragments)
        object.__setattr__(self, 'inactive', inactive)

    @classmethod
    def single_sites(cls, n_sites: int) -> 'FragmentPartition':
        return cls(tuple((i,) for i in range(n_sites)))

    @property
    def all_inactive(self) -> Tuple[int, ...]:
        return tuple(sorted(i for group in self.inactive for i in group))

    def validate(self, n_spatial: int, require_cover: bool = True) -> None:
        if not self.fragments:
            raise PartitionError("At least one fragment is required")
        if len(self.inactive) != len(self.fragments):
            raise PartitionError(f"{len(self.inactive)} inactive lists for {len(self.fragments)} fragments")
        seen = {}
        for label, groups in (('fragment', self.fragments), ('inactive', self.inactive)):
            for a, group in enumerate(groups):
                if label == 'fragment' and not group:
                    raise PartitionError(f"Fragment {a} is empty")
                for i in group:
                    if not 0 <= i < n_spatial:
                        raise PartitionError(f"{label} {a} has orbital {i} outside 0..{n_spatial - 1}")
                    if i in seen:
                        raise PartitionError(f"Orbital {i} appears in both {seen[i]} and {label} {a}")
                    seen[i] = f"{label} {a}"
        if require_cover and len(seen) != n_spatial:
            missing = sorted(set(range(n_spatial)) - set(seen))
            raise PartitionError(f"Orbitals {missing} belong to no fragment or inactive set")


@dataclass(frozen=True)
class BathDecomposition:
    fragment: Tuple[int, ...]
    environment: Tuple[int, ...]
    bath_orbitals: np.ndarray
    bath_occupations: np.ndarray
    core_orbitals: np.ndarray

    @property
    def n_bath(self) -> int:
        return self.bath_orbitals.shape[1]

    @property
    def n_core(self) -> int:
        return self.core_orbitals.shape[1]


@dataclass(frozen=True)
class EmbeddingProblem:
    ints: IntegralSet
    n_emb_electrons: int
    n_fragment: int
    projector: np.ndarray
    mu: float
    bare_one_body: np.ndarray
    core_field: np.ndarray
    n_bath: int
    n_core: int
    fragment: Tuple[int, ...]

    @property
    def n_qubits(self) -> int:
        return 2 * (self.n_fragment + self.n_bath)


class SolverOutput(NamedTuple):
    energy: float
    rdms: RdmPair
    converged: bool = True


class FragmentResult(NamedTuple):
    problem: EmbeddingProblem
    rdms: RdmPair
    solver_energy: float
    converged: bool = True

    @property
    def n_qubits(self) -> int:
        return self.problem.n_qubits

    @property
    def fragment_electrons(self) -> float:
        n = self.problem.n_fragment
        return float(np.trace(self.rdms.one_rdm[:n, :n]))


@dataclass
class DmetResult:
    total_energy: float
    mu_star: float
    fragment_results: List[FragmentResult]
    iterations: List[Tuple[float, float]]
    converged: bool
    mean_field_energy: float = 0.0
    fragment_energies: List[float] = field(default_factory=list)
    cost_history: List[float] = field(default_factory=list)
    correlation_potential: Optional[np.ndarray] = None

    @property
    def n_qubits(self) -> int:
        return max((r.n_qubits for r in self.fragment_results), default=0)

    @property
    def deviation(self) -> float:
        return self.iterations[-1][1] if self.iterations else 0.0


Solver = Callable[[EmbeddingProblem], SolverOutput]


# ============================================================================
# Bath and embedding Hamiltonian
# ============================================================================

def build_bath(one_rdm_mf: np.ndarray, fragment: Sequence[int], eta: float) -> BathDecomposition:
    """
    Diagonalize the environment block of the mean-field 1-RDM. Eigenvectors
    with occupation in (eta, 2-eta) are bath orbitals, those at or above
    2-eta are core; the rest are discarded.
    """
    d = np.asarray(one_rdm_mf, dtype=float)
    n = d.shape[0]
    if d.shape != (n, n) or np.max(np.abs(d - d.T)) > 1e-10:
        raise EmbeddingError("Mean-field 1-RDM is not a symmetric square matrix")
    fragment = tuple(sorted(fragment))
    if any(not 0 <= i < n for i in fragment):
        raise EmbeddingError(f"Fragment {fragment} indexes outside {n} orbitals")
    environment = tuple(i for i in range(n) if i not in fragment)
    if not environment:
        raise EmbeddingError(f"Fragment {fragment} covers every orbital, the environment is empty")

    block = d[np.ix_(environment, environment)]
    occupations, vectors = np.linalg.eigh(0.5 * (block + block.T))
    order = np.argsort(-occupations, kind='stable')
    occupations, vectors = occupations[order], vectors[:, order]
    for k in range(vectors.shape[1]):
        pivot = np.argmax(np.abs(vectors[:, k]))
        if vectors[pivot, k] < 0:
            vectors[:, k] *= -1

    is_core = occupations >= 2.0 - eta
    is_bath = (occupations > eta) & ~is_core
    n_bath = int(np.sum(is_bath))
    if n_bath > len(fragment):
        raise EmbeddingError(f"{n_bath} bath orbitals exceed the fragment size {len(fragment)}")
    return BathDecomposition(
        fragment=fragment,
        environment=environment,
        bath_orbitals=vectors[:, is_bath],
        bath_occupations=occupations[is_bath],
        core_orbitals=vectors[:, is_core],
    )


def build_embedding_hamiltonian(ints: IntegralSet, fragment: Sequence[int], bath: BathDecomposition,
                                mu: float = 0.0) -> EmbeddingProblem:
    """Project the full Hamiltonian onto fragment + bath with the core folded in"""
    n = ints.n_spatial
    fragment = tuple(sorted(fragment))
    if fragment != bath.fragment or len(bath.environment) + len(fragment) != n:
        raise EmbeddingError(f"Bath built for fragment {bath.fragment} over "
                             f"{len(bath.environment) + len(bath.fragment)} orbitals does not match "
                             f"fragment {fragment} over {n} orbitals")
    n_frag = len(fragment)
    environment = list(bath.environment)

    projector = np.zeros((n, n_frag + bath.n_bath))
    for position, orbital in enumerate(fragment):
        projector[orbital, position] = 1.0
    projector[environment, n_frag:] = bath.bath_orbitals

    core = np.zeros((n, bath.n_core))
    core[environment, :] = bath.core_orbitals
    core_rdm = 2.0 * core @ core.T
    j, k = coulomb_exchange(ints.two_body, core_rdm)
    core_potential = j - 0.5 * k
    core_energy = float(np.sum(core_rdm * (ints.one_body + 0.5 * core_potential)))

    bare = transform_one_body(ints.one_body, projector)
    core_field = transform_one_body(core_potential, projector)
    one_body = bare + core_field
    one_body[np.arange(n_frag), np.arange(n_frag)] -= mu

    n_emb_electrons = ints.n_electrons - 2 * bath.n_core
    n_emb = n_frag + bath.n_bath
    if not 0 <= n_emb_electrons <= 2 * n_emb:
        raise EmbeddingError(f"{n_emb_electrons} embedded electrons do not fit in {n_emb} orbitals")

    emb_ints = IntegralSet(
        n_spatial=n_emb,
        n_electrons=n_emb_electrons,
        core_energy=ints.core_energy + core_energy,
        one_body=one_body,
        two_body=transform_two_body(ints.two_body, projector),
    )
    return EmbeddingProblem(
        ints=emb_ints,
        n_emb_electrons=n_emb_electrons,
        n_fragment=n_frag,
        projector=projector,
        mu=mu,
        bare_one_body=bare,
        core_field=core_field,
        n_bath=bath.n_bath,
        n_core=bath.n_core,
        fragment=fragment,
    )


def identity_embedding(ints: IntegralSet, mu: float = 0.0) -> EmbeddingProblem:
    """Embedding of a fragment that spans every orbital"""
    n = ints.n_spatial
    one_body = np.array(ints.one_body)
    one_body[np.arange(n), np.arange(n)] -= mu
    return EmbeddingProblem(
        ints=ints.with_one_body(one_body),
        n_emb_electrons=ints.n_electrons,
        n_fragment=n,
        projector=np.eye(n),
        mu=mu,
        bare_one_body=np.array(ints.one_body),
        core_field=np.zeros((n, n)),
        n_bath=0,
        n_core=0,
        fragment=tuple(range(n)),
    )


# ============================================================================
# Solvers
# ============================================================================

class FciSolver:
    def __call__(self, problem: EmbeddingProblem) -> SolverOutput:
        result = fci_ground_state(problem.ints, problem.n_emb_electrons)
        return SolverOutput(result.energy, result.rdms)


class EsvqeSolver:
    def __init__(self, config: Optional[VqeConfig] = None, log=None):
        self.config = config or VqeConfig()
        self.log = log

    def __call__(self, problem: EmbeddingProblem) -> SolverOutput:
        result = run_esvqe(problem.ints, self.config, self.log)
        return SolverOutput(result.energy, result.rdms, result.outcome.converged)


def make_solver(kind: str, vqe_config: Optional[VqeConfig] = None, log=None) -> Solver:
    if kind == 'fci':
        return FciSolver()
    if kind == 'esvqe':
        return EsvqeSolver(vqe_config, log)
    raise ValueError(f"Unknown solver {kind!r}, expected one of {SOLVERS}")


def _solve_one(index: int, problem: EmbeddingProblem, solver: Solver) -> FragmentResult:
    try:
        output = solver(problem)
        output.rdms.check(problem.n_emb_electrons, RDM_TOL)
    except (RdmError, ArithmeticError, ValueError, RuntimeError) as e:
        logger.error(f"Fragment {index} {problem.fragment} failed: {e}")
        raise FragmentSolveError(index, e) from e
    if not output.converged:
        logger.warning(f"Fragment {index} {problem.fragment}: solver did not converge")
    return FragmentResult(problem, output.rdms, float(output.energy), bool(output.converged))


def solve_fragments(problems: Sequence[EmbeddingProblem], solver: Solver, workers: int = 1) -> List[FragmentResult]:
    if workers > 1 and len(problems) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(_solve_one, i, p, solver) for i, p in enumerate(problems)]
            return [f.result() for f in futures]
    return [_solve_one(i, p, solver) for i, p in enumerate(problems)]


# ============================================================================
# Electron-count constraint
# ============================================================================

def electron_deviation(fragment_rdms: Sequence[RdmPair], partition: FragmentPartition,
                       n_mf: float, n_occ: float) -> float:
    """Sum of fragment-block 1-RDM traces plus n_mf minus n_occ"""
    if len(fragment_rdms) != len(partition.fragments):
        raise EmbeddingError(f"{len(fragment_rdms)} RDMs for {len(partition.fragments)} fragments")
    total = 0.0
    for rdms, fragment in zip(fragment_rdms, partition.fragments):
        n = len(fragment)
        total += float(np.trace(rdms.one_rdm[:n, :n]))
    return total + n_mf - n_occ


def inactive_electrons(mean_field: MeanFieldState, partition: FragmentPartition) -> float:
    inactive = list(partition.all_inactive)
    return float(np.sum(np.diag(mean_field.one_rdm)[inactive])) if inactive else 0.0


def _record_scf(log, mean_field: MeanFieldState, label: str) -> None:
    if log is None:
        return
    for entry in mean_field.trace:
        log.record('scf', stage=label, **entry)


def optimize_mu(ints: IntegralSet, partition: FragmentPartition, solver: Solver,
                cfg: Optional[DmetConfig] = None, mean_field: Optional[MeanFieldState] = None,
                reference: Optional[MeanFieldState] = None, log=None) -> DmetResult:
    """
    Newton iteration on the signed electron deviation f(mu), with the
    derivative taken by central finite difference. Baths come from the fixed
    mean field; only the fragment diagonals of H_emb move with mu.
    """
    cfg = cfg or DmetConfig()
    partition.validate(ints.n_spatial)
    if mean_field is None:
        mean_field = run_rhf(ints, settings=cfg.scf)
        _record_scf(log, mean_field, 'mean_field')
    reference = reference or mean_field
    n_mf = inactive_electrons(reference, partition)
    baths = [build_bath(mean_field.one_rdm, fragment, cfg.eta) for fragment in partition.fragments]

    def evaluate(mu: float):
        problems = [build_embedding_hamiltonian(ints, fragment, bath, mu)
                    for fragment, bath in zip(partition.fragments, baths)]
        results = solve_fragments(problems, solver, cfg.workers)
        deviation = electron_deviation([r.rdms for r in results], partition, n_mf, ints.n_electrons)
        return results, deviation

    trace: List[Tuple[float, float]] = []
    mu = 0.0
    results, deviation = evaluate(mu)
    converged = False
    for iteration in range(cfg.mu_max_iter + 1):
        trace.append((mu, deviation))
        if log is not None:
            log.record('mu', iteration=iteration, mu=mu, deviation=deviation,
                       fragment_energies=fragment_energies(results))
        logger.info(f"mu iteration {iteration}: mu={mu:.8f}, deviation={deviation:+.3e}")
        if abs(deviation) < cfg.tau:
            converged = True
            break
        if iteration == cfg.mu_max_iter:
            break

        _, upper = evaluate(mu + cfg.mu_step)
        _, lower = evaluate(mu - cfg.mu_step)
        slope = (upper - lower) / (2 * cfg.mu_step)
        if abs(slope) < STALL_SLOPE:
            raise ChemicalPotentialStallError(
                f"Electron count does not respond to mu at mu={mu:.8f} (slope {slope:.3e})", trace)
        mu = mu - deviation / slope
        results, deviation = evaluate(mu)

    if not converged:
        logger.warning(f"Chemical potential not converged after {cfg.mu_max_iter} iterations "
                       f"(deviation {deviation:+.3e})")
    energies = fragment_energies(results)
    total = democratic_energy(results, partition, ints, reference)
    return DmetResult(
        total_energy=total,
        mu_star=mu,
        fragment_results=results,
        iterations=trace,
        converged=converged and all(r.converged for r in results),
        mean_field_energy=reference.energy,
        fragment_energies=energies,
    )


# ============================================================================
# Democratic evaluation
# ============================================================================

def index_weights(n_orbitals: int, n_owned: int, rank: int) -> np.ndarray:
    """Fraction of a term's indices that fall on owned positions 0..n_owned-1"""
    owned = (np.arange(n_orbitals) < n_owned).astype(float)
    total = np.zeros((n_orbitals,) * rank)
    for axis in range(rank):
        shape = [1] * rank
        shape[axis] = n_orbitals
        total = total + owned.reshape(shape)
    return total / rank


def fragment_energy(result: FragmentResult) -> float:
    problem = result.problem
    n = problem.ints.n_spatial
    w1 = index_weights(n, problem.n_fragment, 2)
    w2 = index_weights(n, problem.n_fragment, 4)
    one_body = problem.bare_one_body + 0.5 * problem.core_field
    e1 = np.sum(w1 * one_body * result.rdms.one_rdm)
    # (pq|rs) pairs with 2D[p,r,s,q]
    two_rdm = result.rdms.two_rdm.transpose(0, 3, 1, 2)
    e2 = 0.5 * np.sum(w2 * problem.ints.two_body * two_rdm)
    return float(e1 + e2)


def inactive_energy(mean_field: MeanFieldState, ints: IntegralSet, partition: FragmentPartition) -> float:
    """Mean-field energy of the inactive orbitals, row by row"""
    inactive = list(partition.all_inactive)
    if not inactive:
        return 0.0
    d = mean_field.one_rdm
    j, k = coulomb_exchange(ints.two_body, d)
    rows = d @ (ints.one_body + 0.5 * (j - 0.5 * k))
    return float(np.sum(np.diag(rows)[inactive]))


def fragment_energies(results: Sequence[FragmentResult]) -> List[float]:
    return [fragment_energy(r) for r in results]


def democratic_energy(fragment_results: Sequence[FragmentResult], partition: FragmentPartition,
                      ints: IntegralSet, mean_field: Optional[MeanFieldState] = None) -> float:
    if len(fragment_results) != len(partition.fragments) or any(r is None for r in fragment_results):
        raise EmbeddingError(f"Expected {len(partition.fragments)} fragment results, "
                             f"got {len([r for r in fragment_results if r is not None])}")
    total = ints.core_energy + sum(fragment_energy(r) for r in fragment_results)
    if partition.all_inactive:
        mean_field = mean_field or run_rhf(ints)
        total += inactive_energy(mean_field, ints, partition)
    return float(total)


# ============================================================================
# Correlation-potential fitting
# ============================================================================

def correlation_fit_cost(u: CorrelationPotential, fragment_results: Sequence[FragmentResult],
                         mf_state_of_u: MeanFieldState, mf_state_0: MeanFieldState,
                         partition: FragmentPartition, gamma: float) -> float:
    cost = 0.0
    for result, fragment in zip(fragment_results, partition.fragments):
        n = len(fragment)
        high_level = result.rdms.one_rdm[:n, :n]
        low_level = mf_state_of_u.one_rdm[np.ix_(fragment, fragment)]
        cost += float(np.sum((high_level - low_level) ** 2))
    inactive = list(partition.all_inactive)
    if inactive:
        block = np.ix_(inactive, inactive)
        cost += gamma * float(np.sum((mf_state_of_u.one_rdm[block] - mf_state_0.one_rdm[block]) ** 2))
    return cost


def fit_correlation_potential(ints: IntegralSet, u: CorrelationPotential, fragment_results, mf_state_0,
                              partition: FragmentPartition, cfg: DmetConfig) -> Tuple[CorrelationPotential, float]:
    """Nelder-Mead over the fragment-block parameters, restarted once from its own optimum"""

    def cost(values):
        trial = u.with_parameters(values)
        mf_u = run_rhf(ints, trial, cfg.scf)
        return correlation_fit_cost(trial, fragment_results, mf_u, mf_state_0, partition, cfg.gamma)

    start = u.parameters()
    best = minimize(cost, start, method='Nelder-Mead',
                    options={'xatol': 1e-8, 'fatol': 1e-12, 'maxiter': 2000 * max(1, len(start))})
    restart = minimize(cost, best.x, method='Nelder-Mead',
                       options={'xatol': 1e-8, 'fatol': 1e-12, 'maxiter': 2000 * max(1, len(start))})
    if restart.fun <= best.fun:
        best = restart
    return u.with_parameters(best.x), float(best.fun)


# ============================================================================
# Driver
# ============================================================================

def _run_active_space(ints, partition, solver, cfg, log) -> DmetResult:
    if len(partition.fragments) != 1:
        raise PartitionError(f"Active-space DMET takes exactly one fragment, got {len(partition.fragments)}")
    fragment = partition.fragments[0]
    mean_field = run_rhf(ints, settings=cfg.scf)
    _record_scf(log, mean_field, 'mean_field')
    if len(fragment) == ints.n_spatial:
        problem = identity_embedding(ints)
    else:
        bath = build_bath(mean_field.one_rdm, fragment, cfg.eta)
        problem = build_embedding_hamiltonian(ints, fragment, bath, 0.0)
    result = solve_fragments([problem], solver)[0]
    logger.info(f"DMET(AS): {problem.n_fragment} fragment + {problem.n_bath} bath orbitals, "
                f"E={result.solver_energy:.10f}")
    return DmetResult(
        total_energy=result.solver_energy,
        mu_star=0.0,
        fragment_results=[result],
        iterations=[],
        converged=result.converged,
        mean_field_energy=mean_field.energy,
        fragment_energies=[result.solver_energy],
    )


def _run_correlation_fitting(ints, partition, solver, cfg, log) -> DmetResult:
    mf0 = run_rhf(ints, settings=cfg.scf)
    _record_scf(log, mf0, 'mean_field')
    u = CorrelationPotential(ints.n_spatial, partition.fragments)
    history: List[float] = []
    result = None
    converged = False
    for iteration in range(1, cfg.fit_max_iter + 1):
        mf_u = run_rhf(ints, u, cfg.scf)
        result = optimize_mu(ints, partition, solver, cfg, mean_field=mf_u, reference=mf0, log=log)
        u, cost = fit_correlation_potential(ints, u, result.fragment_results, mf0, partition, cfg)
        history.append(cost)
        if log is not None:
            log.record('fit', iteration=iteration, cost=cost, energy=result.total_energy)
        logger.info(f"Correlation fit {iteration}: cost={cost:.3e}, E={result.total_energy:.10f}")
        if len(history) > 1 and history[-2] - history[-1] < cfg.fit_tol:
            converged = True
            break
    if not converged:
        logger.warning(f"Correlation potential not converged after {cfg.fit_max_iter} iterations")
    result.cost_history = history
    result.correlation_potential = u.matrix
    result.converged = converged and result.converged
    return result


def run_dmet(ints: IntegralSet, partition: FragmentPartition, solver_kind: str = 'fci',
             cfg: Optional[DmetConfig] = None, vqe_config: Optional[VqeConfig] = None,
             log=None, solver: Optional[Solver] = None) -> DmetResult:
    cfg = cfg or DmetConfig()
    solver = solver or make_solver(solver_kind, vqe_config, log)
    partition.validate(ints.n_spatial, require_cover=cfg.mode != 'active_space')
    logger.info(f"DMET {cfg.mode} with {len(partition.fragments)} fragment(s), solver={solver_kind}")

    if cfg.mode == 'active_space':
        return _run_active_space(ints, partition, solver, cfg, log)
    if cfg.mode == 'correlation_fitting':
        return _run_correlation_fitting(ints, partition, solver, cfg, log)
    return optimize_mu(ints, partition, solver, cfg, log=log)
