"""
Fermion-to-qubit machinery.

Spin orbitals are interleaved: spin orbital 2p is alpha of spatial orbital p,
2p+1 is beta. Qubit j carries spin orbital j and is bit j of an amplitude
index (bit 0 least significant).

A Pauli string is stored as a pair of bit masks (x, z) standing for the
Hermitian operator prod_j i^(x_j z_j) X_j^x_j Z_j^z_j, so x=z=1 on a qubit is Y.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from integrals import IntegralSet

logger = logging.getLogger(__name__)

PRUNE_TOL = 1e-12
HERMITIAN_TOL = 1e-9
MAX_QUBITS = 24

CREATE = 1
ANNIHILATE = 0

Ladder = Tuple[Tuple[int, int], ...]


class NonHermitianError(ValueError):
    """Expectation of a supposedly Hermitian observable has an imaginary part"""
    pass


class QubitLimitError(ValueError):
    """Dense statevector would exceed MAX_QUBITS"""

    def __init__(self, n_qubits: int):
        self.n_qubits = n_qubits
        super().__init__(f"{n_qubits} qubits exceeds the dense statevector limit of {MAX_QUBITS}")


def _popcount(value: int) -> int:
    return bin(value).count('1')


def bit_parity(values: np.ndarray) -> np.ndarray:
    """Bit parity of each non-negative integer (up to 32 bits)"""
    p = values.copy()
    for shift in (16, 8, 4, 2, 1):
        p ^= p >> shift
    return p & 1


# ============================================================================
# Fermion operators
# ============================================================================

def _canonical_ladder(ladder: Ladder) -> Tuple[int, Optional[Ladder]]:
    """
    Sort a creators-then-annihilators product into creators ascending,
    annihilators descending. Returns (sign, ladder); ladder is None when
    a repeated index makes the term vanish. Other orderings are kept as given.
    """
    actions = [action for _, action in ladder]
    n_create = sum(actions)
    if actions != [CREATE] * n_create + [ANNIHILATE] * (len(actions) - n_create):
        return 1, ladder
    creators = [index for index, _ in ladder[:n_create]]
    annihilators = [index for index, _ in ladder[n_create:]]
    if len(set(creators)) < len(creators) or len(set(annihilators)) < len(annihilators):
        return 0, None

    sign = 1
    for indices, reverse in ((creators, False), (annihilators, True)):
        # bubble sort keeps track of the permutation parity
        items = list(indices)
        for i in range(len(items)):
            for j in range(len(items) - 1 - i):
                out_of_order = items[j] < items[j + 1] if reverse else items[j] > items[j + 1]
                if out_of_order:
                    items[j], items[j + 1] = items[j + 1], items[j]
                    sign = -sign
        indices[:] = items
    canonical = tuple((i, CREATE) for i in creators) + tuple((i, ANNIHILATE) for i in annihilators)
    return sign, canonical


class FermionOperator:
    """Linear combination of ladder-operator products plus a constant"""

    def __init__(self, terms: Iterable[Tuple[complex, Ladder]] = (), constant: complex = 0.0):
        merged: Dict[Ladder, complex] = {}
        for coefficient, ladder in terms:
            ladder = tuple((int(i), int(a)) for i, a in ladder)
            if not ladder:
                constant += coefficient
                continue
            sign, ladder = _canonical_ladder(ladder)
            if ladder is None:
                continue
            merged[ladder] = merged.get(ladder, 0.0) + sign * coefficient
        self.terms: Dict[Ladder, complex] = merged
        self.constant = constant

    @classmethod
    def ladder(cls, *operators: Tuple[int, int], coefficient: complex = 1.0) -> 'FermionOperator':
        return cls([(coefficient, tuple(operators))])

    def __iter__(self):
        return iter(self.terms.items())

    def __len__(self):
        return len(self.terms)

    def __add__(self, other: 'FermionOperator') -> 'FermionOperator':
        terms = [(c, l) for l, c in self.terms.items()] + [(c, l) for l, c in other.terms.items()]
        return FermionOperator(terms, self.constant + other.constant)

    def __mul__(self, other):
        if isinstance(other, FermionOperator):
            terms = []
            for l1, c1 in self.terms.items():
                for l2, c2 in other.terms.items():
                    terms.append((c1 * c2, l1 + l2))
                if other.constant:
                    terms.append((c1 * other.constant, l1))
            if self.constant:
                terms.extend((self.constant * c2, l2) for l2, c2 in other.terms.items())
            return FermionOperator(terms, self.constant * other.constant)
        return FermionOperator([(c * other, l) for l, c in self.terms.items()], self.constant * other)

    __rmul__ = __mul__

    def __sub__(self, other: 'FermionOperator') -> 'FermionOperator':
        return self + other * -1.0

    def hermitian_conjugate(self) -> 'FermionOperator':
        terms = []
        for ladder, coefficient in self.terms.items():
            reversed_ladder = tuple((i, 1 - a) for i, a in reversed(ladder))
            terms.append((np.conj(coefficient), reversed_ladder))
        return FermionOperator(terms, np.conj(self.constant))

    def max_index(self) -> int:
        return max((i for ladder in self.terms for i, _ in ladder), default=-1)

    def to_dense(self, n_modes: Optional[int] = None) -> np.ndarray:
        n_modes = self.max_index() + 1 if n_modes is None else n_modes
        return jordan_wigner(self).to_dense(n_modes)


def expand_to_spin_orbitals(ints: IntegralSet) -> FermionOperator:
    """
    core + sum_pq,s d_pq a+_ps a_qs + 1/2 sum_pqrs,st (pq|rs) a+_ps a+_rt a_st a_qs
    """
    n = ints.n_spatial
    terms = []
    for p in range(n):
        for q in range(n):
            for spin in (0, 1):
                terms.append((ints.one_body[p, q], ((2 * p + spin, CREATE), (2 * q + spin, ANNIHILATE))))

    eri = ints.two_body
    for p, q, r, s in zip(*np.nonzero(eri)):
        value = 0.5 * eri[p, q, r, s]
        for sigma in (0, 1):
            for tau in (0, 1):
                i, j = 2 * p + sigma, 2 * r + tau
                k, l = 2 * s + tau, 2 * q + sigma
                if i == j or k == l:
                    continue
                terms.append((value, ((i, CREATE), (j, CREATE), (k, ANNIHILATE), (l, ANNIHILATE))))
    return FermionOperator(terms, ints.core_energy)


def number_operator(n_modes: int) -> FermionOperator:
    return FermionOperator([(1.0, ((j, CREATE), (j, ANNIHILATE))) for j in range(n_modes)])


# ============================================================================
# Pauli algebra
# ============================================================================

_PAULI_SYMBOLS = {(1, 0): 'X', (1, 1): 'Y', (0, 1): 'Z'}


class PauliTerm(NamedTuple):
    """Pauli string without coefficient; the coefficient lives in a PauliSum"""
    x: int
    z: int

    @classmethod
    def from_axes(cls, axes: Dict[int, str]) -> 'PauliTerm':
        x = z = 0
        for qubit, symbol in axes.items():
            symbol = symbol.upper()
            if symbol in ('X', 'Y'):
                x |= 1 << qubit
            if symbol in ('Y', 'Z'):
                z |= 1 << qubit
            if symbol not in ('X', 'Y', 'Z'):
                raise ValueError(f"Unknown Pauli axis {symbol!r} on qubit {qubit}")
        return cls(x, z)

    @classmethod
    def from_label(cls, label: str) -> 'PauliTerm':
        """'X0 Y1' style labels; an empty label is the identity"""
        axes = {int(token[1:]): token[0] for token in label.split()}
        return cls.from_axes(axes)

    @property
    def axes(self) -> Dict[int, str]:
        result = {}
        support = self.x | self.z
        qubit = 0
        while support >> qubit:
            if (support >> qubit) & 1:
                result[qubit] = _PAULI_SYMBOLS[((self.x >> qubit) & 1, (self.z >> qubit) & 1)]
            qubit += 1
        return result

    @property
    def label(self) -> str:
        return ' '.join(f"{s}{q}" for q, s in self.axes.items()) or 'I'

    def diagonal(self, indices: np.ndarray) -> np.ndarray:
        """Phases d with P|b> = d[b] |b ^ x>"""
        sign = 1.0 - 2.0 * bit_parity(indices & self.z)
        return (1j ** (_popcount(self.x & self.z) % 4)) * sign


def multiply_paulis(a: PauliTerm, b: PauliTerm) -> Tuple[complex, PauliTerm]:
    x = a.x ^ b.x
    z = a.z ^ b.z
    exponent = (_popcount(a.x & a.z) + _popcount(b.x & b.z) - _popcount(x & z)
                + 2 * _popcount(a.z & b.x)) % 4
    return 1j ** exponent, PauliTerm(x, z)


class PauliSum:
    """Qubit operator as {PauliTerm: coefficient}, pruned below PRUNE_TOL"""

    def __init__(self, terms: Optional[Dict[PauliTerm, complex]] = None):
        self.terms: Dict[PauliTerm, complex] = {}
        for term, coefficient in (terms or {}).items():
            if abs(coefficient) > PRUNE_TOL:
                self.terms[PauliTerm(*term)] = complex(coefficient)

    @classmethod
    def identity(cls, coefficient: complex = 1.0) -> 'PauliSum':
        return cls({PauliTerm(0, 0): coefficient})

    @classmethod
    def from_labels(cls, labels: Dict[str, complex]) -> 'PauliSum':
        result: Dict[PauliTerm, complex] = {}
        for label, coefficient in labels.items():
            term = PauliTerm.from_label(label)
            result[term] = result.get(term, 0.0) + coefficient
        return cls(result)

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms.items())

    def __add__(self, other: 'PauliSum') -> 'PauliSum':
        result = dict(self.terms)
        for term, coefficient in other.terms.items():
            result[term] = result.get(term, 0.0) + coefficient
        return PauliSum(result)

    def __sub__(self, other: 'PauliSum') -> 'PauliSum':
        return self + other * -1.0

    def __mul__(self, other):
        if isinstance(other, PauliSum):
            result: Dict[PauliTerm, complex] = {}
            for t1, c1 in self.terms.items():
                for t2, c2 in other.terms.items():
                    phase, term = multiply_paulis(t1, t2)
                    result[term] = result.get(term, 0.0) + phase * c1 * c2
            return PauliSum(result)
        return PauliSum({t: c * other for t, c in self.terms.items()})

    __rmul__ = __mul__

    def coefficient(self, label: str) -> complex:
        return self.terms.get(PauliTerm.from_label(label), 0.0)

    def n_qubits(self) -> int:
        support = 0
        for term in self.terms:
            support |= term.x | term.z
        return support.bit_length()

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return all(abs(c.imag) < tol for c in self.terms.values())

    def grouped(self) -> Dict[int, List[Tuple[PauliTerm, complex]]]:
        """Terms grouped by x mask; each group maps |b> to |b ^ x>"""
        groups: Dict[int, List[Tuple[PauliTerm, complex]]] = {}
        for term, coefficient in sorted(self.terms.items()):
            groups.setdefault(term.x, []).append((term, coefficient))
        return groups

    def group_diagonals(self, indices: np.ndarray) -> Dict[int, np.ndarray]:
        """For each x mask, the summed phase vector over the given basis indices"""
        diagonals = {}
        for x, members in self.grouped().items():
            total = np.zeros(len(indices), dtype=complex)
            for term, coefficient in members:
                total += coefficient * term.diagonal(indices)
            diagonals[x] = total
        return diagonals

    def to_dense(self, n_qubits: Optional[int] = None) -> np.ndarray:
        n_qubits = self.n_qubits() if n_qubits is None else n_qubits
        _check_qubits(n_qubits)
        dim = 1 << n_qubits
        indices = np.arange(dim)
        matrix = np.zeros((dim, dim), dtype=complex)
        for x, diagonal in self.group_diagonals(indices).items():
            matrix[indices ^ x, indices] += diagonal
        return matrix


@lru_cache(maxsize=4096)
def _ladder_image(index: int, action: int) -> Tuple[Tuple[PauliTerm, complex], ...]:
    """a+_j = (X_j - iY_j)/2 Z_{j-1}..Z_0 and a_j = (X_j + iY_j)/2 Z_{j-1}..Z_0"""
    bit = 1 << index
    below = bit - 1
    sign = -1.0 if action == CREATE else 1.0
    return ((PauliTerm(bit, below), 0.5), (PauliTerm(bit, below | bit), sign * 0.5j))


def jordan_wigner(op: FermionOperator) -> PauliSum:
    result: Dict[PauliTerm, complex] = {}
    if op.constant:
        result[PauliTerm(0, 0)] = complex(op.constant)
    for ladder, coefficient in op.terms.items():
        partial = [(PauliTerm(0, 0), complex(coefficient))]
        for index, action in ladder:
            expanded = []
            for term, c in partial:
                for factor, f in _ladder_image(index, action):
                    phase, product = multiply_paulis(term, factor)
                    expanded.append((product, phase * c * f))
            partial = expanded
        for term, c in partial:
            result[term] = result.get(term, 0.0) + c
    return PauliSum(result)


# ============================================================================
# Statevector backend
# ============================================================================

def _check_qubits(n_qubits: int) -> None:
    if n_qubits > MAX_QUBITS:
        raise QubitLimitError(n_qubits)


@dataclass(frozen=True)
class Statevector:
    amplitudes: np.ndarray
    n_qubits: int

    @classmethod
    def basis_state(cls, n_qubits: int, index: int) -> 'Statevector':
        _check_qubits(n_qubits)
        amplitudes = np.zeros(1 << n_qubits, dtype=complex)
        amplitudes[index] = 1.0
        return cls(amplitudes, n_qubits)

    @classmethod
    def from_amplitudes(cls, amplitudes: Sequence[complex]) -> 'Statevector':
        amplitudes = np.asarray(amplitudes, dtype=complex)
        n_qubits = int(amplitudes.size).bit_length() - 1
        if amplitudes.size != 1 << n_qubits:
            raise ValueError(f"Amplitude count {amplitudes.size} is not a power of two")
        _check_qubits(n_qubits)
        return cls(amplitudes / np.linalg.norm(amplitudes), n_qubits)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def _indices(self) -> np.ndarray:
        return np.arange(1 << self.n_qubits)

    def apply_pauli(self, pauli: PauliTerm) -> np.ndarray:
        indices = self._indices()
        return (pauli.diagonal(indices) * self.amplitudes)[indices ^ pauli.x]


def apply_pauli_sum(h: PauliSum, psi: Statevector) -> np.ndarray:
    """Unnormalized vector h|psi>"""
    if h.n_qubits() > psi.n_qubits:
        raise ValueError(f"Operator acts on {h.n_qubits()} qubits, state has {psi.n_qubits}")
    indices = np.arange(1 << psi.n_qubits)
    result = np.zeros_like(psi.amplitudes)
    for x, diagonal in h.group_diagonals(indices).items():
        result += (diagonal * psi.amplitudes)[indices ^ x]
    return result


def expectation(h: PauliSum, psi: Statevector) -> float:
    value = np.vdot(psi.amplitudes, apply_pauli_sum(h, psi))
    if abs(value.imag) >= HERMITIAN_TOL:
        raise NonHermitianError(f"Expectation has imaginary part {value.imag:.3e}")
    return float(value.real)


def apply_pauli_exponential(psi: Statevector, pauli: PauliTerm, theta: float) -> Statevector:
    """exp(i theta P)|psi> = cos(theta)|psi> + i sin(theta) P|psi>"""
    if (pauli.x | pauli.z) >> psi.n_qubits:
        raise ValueError(f"Pauli {pauli.label} acts outside {psi.n_qubits} qubits")
    amplitudes = np.cos(theta) * psi.amplitudes + 1j * np.sin(theta) * psi.apply_pauli(pauli)
    return Statevector(amplitudes, psi.n_qubits)
