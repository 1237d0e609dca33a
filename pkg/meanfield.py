"""
Restricted Hartree-Fock over an orthonormal orbital basis
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from integrals import IntegralSet

logger = logging.getLogger(__name__)

DEGENERACY_TOL = 1e-9


class ScfConvergenceError(RuntimeError):
    """SCF did not reach the density tolerance within max_iter"""

    def __init__(self, iterations: int, residual: float, trace=None):
        self.iterations = iterations
        self.residual = residual
        self.trace = trace or []
        super().__init__(f"SCF not converged after {iterations} iterations (density residual {residual:.3e})")


class DegenerateOrbitalsError(ValueError):
    """HOMO and LUMO are degenerate, closed-shell occupation is undefined"""

    def __init__(self, homo: float, lumo: float):
        self.homo = homo
        self.lumo = lumo
        super().__init__(f"Degenerate frontier orbitals: HOMO={homo:.12f}, LUMO={lumo:.12f}")


@dataclass(frozen=True)
class ScfSettings:
    density_tol: float = 1e-10
    max_iter: int = 200
    damping: float = 0.5
    use_diis: bool = False
    diis_space: int = 8


@dataclass(frozen=True)
class MeanFieldState:
    """Converged RHF solution; trace holds one entry per SCF iteration"""

    coefficients: np.ndarray
    orbital_energies: np.ndarray
    n_occ_spatial: int
    one_rdm: np.ndarray
    energy: float
    trace: Tuple[dict, ...] = field(default=(), compare=False)
    iterations: int = 0

    @property
    def occupied(self) -> np.ndarray:
        return self.coefficients[:, :self.n_occ_spatial]


class CorrelationPotential:
    """Symmetric one-body potential living only on fragment diagonal blocks"""

    def __init__(self, n_spatial: int, blocks: Sequence[Sequence[int]], matrix: Optional[np.ndarray] = None):
        self.n_spatial = n_spatial
        self.blocks = [sorted(block) for block in blocks]
        self.matrix = np.zeros((n_spatial, n_spatial)) if matrix is None else np.array(matrix, dtype=float)
        allowed = np.zeros((n_spatial, n_spatial), dtype=bool)
        for block in self.blocks:
            allowed[np.ix_(block, block)] = True
        if np.max(np.abs(self.matrix - self.matrix.T), initial=0.0) > 1e-12:
            raise ValueError("Correlation potential is not symmetric")
        if np.any(self.matrix[~allowed] != 0.0):
            raise ValueError("Correlation potential has entries outside the fragment blocks")

    @property
    def n_parameters(self) -> int:
        return sum(len(b) * (len(b) + 1) // 2 for b in self.blocks)

    def parameters(self) -> np.ndarray:
        values = []
        for block in self.blocks:
            rows, cols = np.triu_indices(len(block))
            values.extend(self.matrix[np.ix_(block, block)][rows, cols])
        return np.array(values)

    def with_parameters(self, values: Sequence[float]) -> 'CorrelationPotential':
        matrix = np.zeros((self.n_spatial, self.n_spatial))
        offset = 0
        for block in self.blocks:
            rows, cols = np.triu_indices(len(block))
            count = len(rows)
            sub = np.zeros((len(block), len(block)))
            sub[rows, cols] = values[offset:offset + count]
            sub[cols, rows] = values[offset:offset + count]
            matrix[np.ix_(block, block)] = sub
            offset += count
        return CorrelationPotential(self.n_spatial, self.blocks, matrix)


def coulomb_exchange(eri: np.ndarray, one_rdm: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """J_pq = sum_rs (pq|rs) D_rs and K_pq = sum_rs (pr|qs) D_rs"""
    j = np.einsum('pqrs,rs->pq', eri, one_rdm, optimize=True)
    k = np.einsum('prqs,rs->pq', eri, one_rdm, optimize=True)
    return j, k


def fock_matrix(ints: IntegralSet, one_rdm: np.ndarray, u: Optional[np.ndarray] = None) -> np.ndarray:
    j, k = coulomb_exchange(ints.two_body, one_rdm)
    fock = ints.one_body + j - 0.5 * k
    if u is not None:
        fock = fock + u
    return 0.5 * (fock + fock.T)


def _energy(ints: IntegralSet, one_rdm: np.ndarray, fock: np.ndarray, u: Optional[np.ndarray]) -> float:
    h = ints.one_body if u is None else ints.one_body + u
    return float(ints.core_energy + 0.5 * np.sum(one_rdm * (h + fock)))


def _aufbau(fock: np.ndarray, n_occ: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    eigenvalues, vectors = linalg.eigh(fock)
    occupied = vectors[:, :n_occ]
    return eigenvalues, vectors, 2.0 * occupied @ occupied.T


class _Diis:
    """Pulay extrapolation of Fock matrices on the commutator error FD - DF"""

    def __init__(self, space: int):
        self.space = space
        self.focks: List[np.ndarray] = []
        self.errors: List[np.ndarray] = []

    def extrapolate(self, fock: np.ndarray, one_rdm: np.ndarray) -> np.ndarray:
        self.focks.append(fock)
        self.errors.append((fock @ one_rdm - one_rdm @ fock).ravel())
        if len(self.focks) > self.space:
            self.focks.pop(0)
            self.errors.pop(0)
        n = len(self.focks)
        if n < 2:
            return fock
        b = -np.ones((n + 1, n + 1))
        b[n, n] = 0.0
        for i in range(n):
            for j in range(i + 1):
                b[i, j] = b[j, i] = self.errors[i] @ self.errors[j]
        rhs = np.zeros(n + 1)
        rhs[n] = -1.0
        try:
            weights = np.linalg.solve(b, rhs)[:n]
        except np.linalg.LinAlgError:
            logger.debug("DIIS subspace singular, resetting")
            self.focks = self.focks[-1:]
            self.errors = self.errors[-1:]
            return fock
        return sum(w * f for w, f in zip(weights, self.focks))


def run_rhf(ints: IntegralSet, u: Optional[np.ndarray] = None,
            settings: Optional[ScfSettings] = None) -> MeanFieldState:
    """
    Closed-shell SCF starting from the core guess of d + u.

    Without DIIS the density is damped between iterations. Raises
    ScfConvergenceError when the density residual stays above
    settings.density_tol after settings.max_iter iterations.
    """
    settings = settings or ScfSettings()
    n = ints.n_spatial
    if ints.n_electrons % 2:
        raise ValueError(f"RHF requires an even electron count, got {ints.n_electrons}")
    n_occ = ints.n_electrons // 2
    if n_occ > n:
        raise ValueError(f"{ints.n_electrons} electrons do not fit in {n} spatial orbitals")
    if isinstance(u, CorrelationPotential):
        u = u.matrix
    if u is not None:
        u = np.asarray(u, dtype=float)
        if u.shape != (n, n):
            raise ValueError(f"Correlation potential shape {u.shape} does not match n_spatial={n}")

    h = ints.one_body if u is None else ints.one_body + u
    _, _, one_rdm = _aufbau(h, n_occ)
    diis = _Diis(settings.diis_space) if settings.use_diis else None

    trace = []
    residual = float('inf')
    eigenvalues = vectors = None
    converged = False
    iteration = 0
    for iteration in range(1, settings.max_iter + 1):
        fock = fock_matrix(ints, one_rdm, u)
        energy = _energy(ints, one_rdm, fock, u)
        if diis is not None:
            fock = diis.extrapolate(fock, one_rdm)
        eigenvalues, vectors, new_rdm = _aufbau(fock, n_occ)
        residual = float(np.max(np.abs(new_rdm - one_rdm))) if n else 0.0
        trace.append({'iteration': iteration, 'energy': energy, 'residual': residual})
        logger.debug(f"SCF iteration {iteration}: E={energy:.12f}, residual={residual:.3e}")

        if residual < settings.density_tol:
            one_rdm = new_rdm
            converged = True
            break
        if diis is None:
            one_rdm = (1.0 - settings.damping) * new_rdm + settings.damping * one_rdm
        else:
            one_rdm = new_rdm

    if not converged:
        raise ScfConvergenceError(settings.max_iter, residual, trace)

    if 0 < n_occ < n and abs(eigenvalues[n_occ] - eigenvalues[n_occ - 1]) < DEGENERACY_TOL:
        raise DegenerateOrbitalsError(float(eigenvalues[n_occ - 1]), float(eigenvalues[n_occ]))

    fock = fock_matrix(ints, one_rdm, u)
    energy = _energy(ints, one_rdm, fock, u)
    logger.debug(f"SCF converged in {iteration} iterations, E={energy:.12f}")
    return MeanFieldState(
        coefficients=vectors,
        orbital_energies=eigenvalues,
        n_occ_spatial=n_occ,
        one_rdm=one_rdm,
        energy=energy,
        trace=tuple(trace),
        iterations=iteration,
    )


def mean_field_rdm_block(state: MeanFieldState, rows: Sequence[int], cols: Sequence[int]) -> np.ndarray:
    n = state.one_rdm.shape[0]
    rows = list(rows)
    cols = list(cols)
    for index in rows + cols:
        if not 0 <= index < n:
            raise IndexError(f"Orbital index {index} out of range for {n} orbitals")
    return state.one_rdm[np.ix_(rows, cols)]
