"""
Spin-traced reduced density matrices.

Convention: 2D[p,q,r,s] = sum over spins s1,s2 of <a+_{p s1} a+_{q s2} a_{r s2} a_{s s1}>
"""
import logging
from dataclasses import dataclass

import numpy as np

from integrals import IntegralSet

logger = logging.getLogger(__name__)


class RdmError(ValueError):
    """RDMs violate a trace, symmetry or N-representability condition"""
    pass


@dataclass(frozen=True)
class RdmPair:
    one_rdm: np.ndarray
    two_rdm: np.ndarray

    @property
    def n_orbitals(self) -> int:
        return self.one_rdm.shape[0]

    def check(self, n_electrons: int, tol: float = 1e-6) -> None:
        """Raise RdmError unless trace, symmetry, spectrum and partial trace hold to tol"""
        d1 = self.one_rdm
        n = d1.shape[0]
        if d1.shape != (n, n) or self.two_rdm.shape != (n, n, n, n):
            raise RdmError(f"RDM shapes {d1.shape} and {self.two_rdm.shape} are inconsistent")
        if n == 0:
            return
        trace = float(np.trace(d1))
        if abs(trace - n_electrons) > tol:
            raise RdmError(f"1-RDM trace {trace:.10f} differs from {n_electrons} electrons")
        if np.max(np.abs(d1 - d1.T)) > tol:
            raise RdmError("1-RDM is not symmetric")
        occupations = np.linalg.eigvalsh(0.5 * (d1 + d1.T))
        if occupations[0] < -max(tol, 1e-8) or occupations[-1] > 2.0 + max(tol, 1e-8):
            raise RdmError(f"1-RDM occupations outside [0, 2]: [{occupations[0]:.3e}, {occupations[-1]:.6f}]")
        contracted = np.einsum('pqqs->ps', self.two_rdm)
        mismatch = np.max(np.abs(contracted - (n_electrons - 1) * d1))
        if mismatch > tol * max(1, n_electrons):
            raise RdmError(f"2-RDM partial trace mismatch {mismatch:.3e}")


def energy_from_rdms(ints: IntegralSet, rdms: RdmPair) -> float:
    """core + sum h_pq D_pq + 1/2 sum (pq|rs) 2D[p,r,s,q]"""
    one = np.sum(ints.one_body * rdms.one_rdm)
    two = 0.5 * np.einsum('pqrs,prsq->', ints.two_body, rdms.two_rdm, optimize=True)
    return float(ints.core_energy + one + two)


def spin_trace(one_rdm_so: np.ndarray, two_rdm_so: np.ndarray) -> RdmPair:
    """
    Fold interleaved spin-orbital RDMs (even index alpha, odd index beta)
    onto spatial orbitals.
    """
    n = one_rdm_so.shape[0] // 2
    d1 = one_rdm_so.reshape(n, 2, n, 2)
    one = np.einsum('paqa->pq', d1)
    d2 = two_rdm_so.reshape(n, 2, n, 2, n, 2, n, 2)
    # 2D[p,q,r,s] pairs the spin of p with s and of q with r
    two = np.einsum('paqbrbsa->pqrs', d2)
    one = 0.5 * (one + one.T)
    return RdmPair(one_rdm=one, two_rdm=two)


def mean_field_two_rdm(one_rdm: np.ndarray) -> np.ndarray:
    """Closed-shell determinant 2-RDM from its spatial 1-RDM"""
    coulomb = np.einsum('ps,qr->pqrs', one_rdm, one_rdm)
    exchange = np.einsum('pr,qs->pqrs', one_rdm, one_rdm)
    return coulomb - 0.5 * exchange


def rotate_rdms(rdms: RdmPair, c: np.ndarray) -> RdmPair:
    """Express RDMs given over orbitals c[:, k] in the basis c is written in"""
    one = c @ rdms.one_rdm @ c.T
    two = np.einsum('ap,bq,cr,ds,pqrs->abcd', c, c, c, c, rdms.two_rdm, optimize=True)
    return RdmPair(one_rdm=0.5 * (one + one.T), two_rdm=two)
