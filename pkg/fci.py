"""
Full configuration interaction over the Jordan-Wigner Hamiltonian restricted
to a fixed particle-number and S_z sector.
"""
import logging
from dataclasses import dataclass
from itertools import combinations
from typing import NamedTuple, Optional

import numpy as np
from scipy import linalg, sparse
from scipy.sparse.linalg import eigsh

from integrals import IntegralSet
from qubits import PauliSum, bit_parity, expand_to_spin_orbitals, jordan_wigner
from rdm import RdmPair, spin_trace

logger = logging.getLogger(__name__)

MAX_FCI_MODES = 16
DENSE_LIMIT = 2000
EIGEN_TOL = 1e-10
LEAK_TOL = 1e-12


class SectorError(ValueError):
    """Empty or oversized sector, or an operator that leaves the sector"""
    pass


@dataclass(frozen=True)
class SectorBasis:
    """Occupation bitmasks with fixed N and S_z, sorted ascending"""

    n_modes: int
    n_electrons: int
    s_z: float
    masks: np.ndarray

    @classmethod
    def build(cls, n_modes: int, n_electrons: int, s_z: float = 0.0) -> 'SectorBasis':
        if n_modes % 2:
            raise SectorError(f"Interleaved spin orbitals need an even mode count, got {n_modes}")
        n_spatial = n_modes // 2
        twice_alpha = n_electrons + 2 * s_z
        if twice_alpha != int(twice_alpha) or int(twice_alpha) % 2:
            raise SectorError(f"S_z={s_z} is incompatible with {n_electrons} electrons")
        n_alpha = int(twice_alpha) // 2
        n_beta = n_electrons - n_alpha
        if not (0 <= n_alpha <= n_spatial and 0 <= n_beta <= n_spatial):
            raise SectorError(f"Sector N={n_electrons}, S_z={s_z} is empty for {n_spatial} spatial orbitals")

        alpha = [sum(1 << (2 * k) for k in occ) for occ in combinations(range(n_spatial), n_alpha)]
        beta = [sum(1 << (2 * k + 1) for k in occ) for occ in combinations(range(n_spatial), n_beta)]
        masks = np.array(sorted(a | b for a in alpha for b in beta), dtype=np.int64)
        return cls(n_modes, n_electrons, s_z, masks)

    def __len__(self):
        return len(self.masks)

    def index(self, mask: int) -> int:
        position = int(np.searchsorted(self.masks, mask))
        if position >= len(self.masks) or self.masks[position] != mask:
            raise KeyError(f"Mask {mask:#b} is not in the sector")
        return position

    def reference_mask(self) -> int:
        """Lowest alpha and beta spin orbitals occupied"""
        n_alpha = int(self.n_electrons + 2 * self.s_z) // 2
        n_beta = self.n_electrons - n_alpha
        return sum(1 << (2 * k) for k in range(n_alpha)) | sum(1 << (2 * k + 1) for k in range(n_beta))


class FciResult(NamedTuple):
    energy: float
    rdms: RdmPair
    vector: np.ndarray
    basis: SectorBasis


def _sector_entries(h: PauliSum, basis: SectorBasis):
    masks = basis.masks
    sources = np.arange(len(masks))
    rows, cols, values = [], [], []
    for x, diagonal in h.group_diagonals(masks).items():
        targets = masks ^ x
        positions = np.minimum(np.searchsorted(masks, targets), len(masks) - 1)
        inside = masks[positions] == targets
        leaking = ~inside & (np.abs(diagonal) > LEAK_TOL)
        if np.any(leaking):
            raise SectorError(f"Operator maps {int(np.sum(leaking))} sector states outside the sector")
        rows.append(positions[inside])
        cols.append(sources[inside])
        values.append(diagonal[inside])
    if not rows:
        return np.array([], dtype=int), np.array([], dtype=int), np.array([])
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(values)


def sector_hamiltonian(h: PauliSum, basis: SectorBasis, as_sparse: bool = False):
    """Matrix of h between sector states; real when all elements are real"""
    dim = len(basis)
    rows, cols, values = _sector_entries(h, basis)
    if values.size and np.max(np.abs(values.imag)) < LEAK_TOL:
        values = values.real
    matrix = sparse.coo_matrix((values, (rows, cols)), shape=(dim, dim)).tocsr()
    if dim and abs(matrix - matrix.conj().T).max() > 1e-12:
        raise SectorError("Sector Hamiltonian is not Hermitian")
    return matrix if as_sparse else matrix.toarray()


def _all_masks(n_modes: int, n_particles: int) -> np.ndarray:
    return np.array(sorted(sum(1 << k for k in occ) for occ in combinations(range(n_modes), n_particles)),
                    dtype=np.int64)


def _annihilate(vector: np.ndarray, masks: np.ndarray, mode: int, targets: np.ndarray) -> np.ndarray:
    """Coefficients of a_mode|vector> over the target masks"""
    occupied = ((masks >> mode) & 1).astype(bool)
    source = masks[occupied]
    sign = 1.0 - 2.0 * bit_parity(source & ((1 << mode) - 1))
    result = np.zeros(len(targets), dtype=vector.dtype)
    result[np.searchsorted(targets, source ^ (1 << mode))] = sign * vector[occupied]
    return result


def sector_rdms(vector: np.ndarray, basis: SectorBasis) -> RdmPair:
    """Spin-traced 1- and 2-RDM of a sector vector by direct contraction"""
    m = basis.n_modes
    n = basis.n_electrons
    one_so = np.zeros((m, m))
    two_so = np.zeros((m, m, m, m))

    if n >= 1:
        singles = _all_masks(m, n - 1)
        a1 = np.array([_annihilate(vector, basis.masks, p, singles) for p in range(m)])
        # 1D[p,q] = <a_p psi | a_q psi>
        one_so = np.real(a1.conj() @ a1.T)
        if n >= 2:
            doubles = _all_masks(m, n - 2)
            a2 = np.array([_annihilate(a1[s], singles, r, doubles) for r in range(m) for s in range(m)])
            # 2D[p,q,r,s] = <a_q a_p psi | a_r a_s psi>
            overlap = np.real(a2.conj() @ a2.T).reshape(m, m, m, m)
            two_so = overlap.transpose(1, 0, 2, 3)
    return spin_trace(one_so, two_so)


def fci_ground_state(ints: IntegralSet, n_electrons: Optional[int] = None, s_z: float = 0.0) -> FciResult:
    """Lowest eigenpair of the sector Hamiltonian; energy includes core_energy"""
    n_electrons = ints.n_electrons if n_electrons is None else n_electrons
    n_modes = 2 * ints.n_spatial
    if n_modes > MAX_FCI_MODES:
        raise SectorError(f"{n_modes} spin orbitals exceeds the FCI limit of {MAX_FCI_MODES}")
    if not 0 <= n_electrons <= n_modes:
        raise SectorError(f"{n_electrons} electrons do not fit in {n_modes} spin orbitals")

    basis = SectorBasis.build(n_modes, n_electrons, s_z)
    h = jordan_wigner(expand_to_spin_orbitals(ints))
    dim = len(basis)

    if dim < DENSE_LIMIT:
        matrix = sector_hamiltonian(h, basis)
        eigenvalues, vectors = linalg.eigh(matrix)
        energy, vector = float(eigenvalues[0]), vectors[:, 0]
    else:
        matrix = sector_hamiltonian(h, basis, as_sparse=True)
        start = np.zeros(dim, dtype=matrix.dtype)
        start[basis.index(basis.reference_mask())] = 1.0
        eigenvalues, vectors = eigsh(matrix, k=1, which='SA', v0=start, tol=EIGEN_TOL)
        energy, vector = float(eigenvalues[0]), vectors[:, 0]

    if np.iscomplexobj(vector):
        # fix the global phase so the largest amplitude is real
        vector = vector * np.exp(-1j * np.angle(vector[np.argmax(np.abs(vector))]))
    logger.debug(f"FCI sector dim={dim}, E={energy:.12f}")
    return FciResult(energy, sector_rdms(vector, basis), vector, basis)
