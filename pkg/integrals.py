"""
Second-quantized Hamiltonian data: FCIDUMP ingestion, lattice models and
orbital-basis transformations.

Two-body integrals are kept in chemists' notation (pq|rs) over spatial orbitals.
"""
import logging
import re
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.linalg

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-10
DUPLICATE_TOL = 1e-10
OVERLAP_EIGEN_MIN = 1e-10


class FcidumpError(ValueError):
    """Malformed FCIDUMP text"""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class ConditioningError(ValueError):
    """Overlap matrix is not positive definite"""

    def __init__(self, smallest_eigenvalue: float):
        self.smallest_eigenvalue = smallest_eigenvalue
        super().__init__(f"Overlap matrix is not positive definite (smallest eigenvalue {smallest_eigenvalue:.3e})")


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class IntegralSet:
    """Core constant, one-body matrix and two-body tensor of a Hamiltonian"""

    n_spatial: int
    n_electrons: int
    core_energy: float
    one_body: np.ndarray
    two_body: np.ndarray
    ms2: int = 0

    def __post_init__(self):
        n = self.n_spatial
        one_body = _frozen(np.reshape(self.one_body, (n, n)))
        two_body = _frozen(np.reshape(self.two_body, (n, n, n, n)))
        object.__setattr__(self, 'one_body', one_body)
        object.__setattr__(self, 'two_body', two_body)
        object.__setattr__(self, 'core_energy', float(self.core_energy))

        if n < 0:
            raise ValueError(f"n_spatial must be non-negative, got {n}")
        if not 0 <= self.n_electrons <= 2 * n:
            raise ValueError(f"n_electrons={self.n_electrons} outside [0, {2 * n}]")
        if n and np.max(np.abs(one_body - one_body.T)) > SYMMETRY_TOL:
            raise ValueError("one_body is not symmetric")
        if n:
            for axes in ((1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1)):
                if np.max(np.abs(two_body - two_body.transpose(axes))) > SYMMETRY_TOL:
                    raise ValueError(f"two_body violates (pq|rs) permutation symmetry {axes}")

    def with_one_body(self, one_body: np.ndarray) -> 'IntegralSet':
        return IntegralSet(self.n_spatial, self.n_electrons, self.core_energy, one_body, self.two_body, self.ms2)

    def __eq__(self, other):
        if not isinstance(other, IntegralSet):
            return NotImplemented
        return (
            self.n_spatial == other.n_spatial and
            self.n_electrons == other.n_electrons and
            self.ms2 == other.ms2 and
            self.core_energy == other.core_energy and
            np.array_equal(self.one_body, other.one_body) and
            np.array_equal(self.two_body, other.two_body)
        )

    __hash__ = None


def symmetrize_two_body(eri: np.ndarray) -> np.ndarray:
    """Complete the 8-fold symmetry so that all images hold bit-identical values"""
    eri = 0.5 * (eri + eri.transpose(1, 0, 2, 3))
    eri = 0.5 * (eri + eri.transpose(0, 1, 3, 2))
    return 0.5 * (eri + eri.transpose(2, 3, 0, 1))


def transform_one_body(h: np.ndarray, c: np.ndarray) -> np.ndarray:
    h = c.T @ h @ c
    return 0.5 * (h + h.T)


def transform_two_body(eri: np.ndarray, c: np.ndarray) -> np.ndarray:
    """
    Rotate (pq|rs) by c on all four indices.

    c may be rectangular (n_old x n_new). Four successive quarter transforms
    keep the cost at O(n^5).
    """
    eri = np.tensordot(eri, c, axes=([3], [0]))
    eri = np.tensordot(eri, c, axes=([2], [0])).transpose(0, 1, 3, 2)
    eri = np.tensordot(c, eri, axes=([0], [1])).transpose(1, 0, 2, 3)
    eri = np.tensordot(c, eri, axes=([0], [0]))
    return symmetrize_two_body(eri)


# ============================================================================
# FCIDUMP
# ============================================================================

_HEADER_INT = re.compile(r'\b(NORB|NELEC|MS2)\s*=\s*([^,\s/&]+)', re.I)


def _parse_header(header: str) -> Dict[str, str]:
    # ORBSYM and ISYM are accepted but not used
    return {key.upper(): value for key, value in _HEADER_INT.findall(header)}


def _header_int(fields: Dict[str, str], key: str, default: Optional[int] = None) -> int:
    if key not in fields:
        if default is not None:
            return default
        raise FcidumpError(f"header field {key} is missing", 1)
    try:
        return int(fields[key])
    except ValueError:
        raise FcidumpError(f"header field {key}={fields[key]!r} is not an integer", 1)


def _canonical_pair(i: int, j: int) -> Tuple[int, int]:
    return (i, j) if i >= j else (j, i)


def _canonical_quad(i: int, j: int, k: int, l: int) -> Tuple[int, int, int, int]:
    ij = _canonical_pair(i, j)
    kl = _canonical_pair(k, l)
    return ij + kl if ij >= kl else kl + ij


def parse_fcidump(text: str) -> IntegralSet:
    """Parse FCIDUMP text into a symmetry-completed IntegralSet"""
    lines = text.splitlines()
    header_lines = []
    body_start = None
    for number, line in enumerate(lines):
        header_lines.append(line)
        stripped = line.strip().upper()
        if stripped.endswith('&END') or stripped == '/' or stripped.endswith('/'):
            body_start = number + 1
            break
    if body_start is None:
        raise FcidumpError("header terminator (&END or /) not found", len(lines) or 1)

    fields = _parse_header(' '.join(header_lines))
    if 'NORB' not in fields:
        raise FcidumpError("header field NORB is missing", 1)
    n = _header_int(fields, 'NORB')
    n_electrons = _header_int(fields, 'NELEC')
    ms2 = _header_int(fields, 'MS2', default=0)
    if n < 0:
        raise FcidumpError(f"NORB={n} is negative", 1)

    core = {}
    one_body = {}
    two_body = {}

    def _store(table, key, value, line_number):
        if key in table:
            previous, previous_line = table[key]
            if abs(previous - value) > DUPLICATE_TOL:
                raise FcidumpError(
                    f"entry {key} conflicts with line {previous_line} ({previous!r} vs {value!r})", line_number)
            return
        table[key] = (value, line_number)

    for offset, line in enumerate(lines[body_start:]):
        line_number = body_start + offset + 1
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 5:
            raise FcidumpError(f"expected 'value i j k l', got {line.strip()!r}", line_number)
        try:
            value = float(parts[0].replace('D', 'E').replace('d', 'e'))
            i, j, k, l = (int(p) for p in parts[1:])
        except ValueError:
            raise FcidumpError(f"unparsable entry {line.strip()!r}", line_number)
        if max(i, j, k, l) > n or min(i, j, k, l) < 0:
            raise FcidumpError(f"index out of range for NORB={n}", line_number)

        if i == j == k == l == 0:
            _store(core, 0, value, line_number)
        elif k == 0 and l == 0 and i > 0 and j > 0:
            _store(one_body, _canonical_pair(i - 1, j - 1), value, line_number)
        elif min(i, j, k, l) > 0:
            _store(two_body, _canonical_quad(i - 1, j - 1, k - 1, l - 1), value, line_number)
        elif j == k == l == 0:
            # orbital energy line, not part of the Hamiltonian
            continue
        else:
            raise FcidumpError(f"unsupported index pattern {(i, j, k, l)}", line_number)

    h = np.zeros((n, n))
    for (p, q), (value, _) in one_body.items():
        h[p, q] = h[q, p] = value
    eri = np.zeros((n, n, n, n))
    for (p, q, r, s), (value, _) in two_body.items():
        for a, b, c, d in ((p, q, r, s), (q, p, r, s), (p, q, s, r), (q, p, s, r),
                           (r, s, p, q), (s, r, p, q), (r, s, q, p), (s, r, q, p)):
            eri[a, b, c, d] = value

    ints = IntegralSet(
        n_spatial=n,
        n_electrons=n_electrons,
        core_energy=core.get(0, (0.0, None))[0],
        one_body=h,
        two_body=eri,
        ms2=ms2,
    )
    logger.debug(f"Parsed FCIDUMP with NORB={n}, NELEC={n_electrons}, {len(two_body)} two-body entries")
    return ints


def write_fcidump(ints: IntegralSet) -> str:
    """Emit canonical-index FCIDUMP text (one entry per symmetry class)"""
    n = ints.n_spatial
    orbsym = ','.join(['1'] * n)
    lines = [
        f" &FCI NORB={n},NELEC={ints.n_electrons},MS2={ints.ms2},",
        f"  ORBSYM={orbsym}," if n else "  ORBSYM=,",
        "  ISYM=1,",
        " &END",
    ]

    def _entry(value, i, j, k, l):
        return f"{value:24.16e} {i:4d} {j:4d} {k:4d} {l:4d}"

    eri = ints.two_body
    for p in range(n):
        for q in range(p + 1):
            for r in range(p + 1):
                for s in range(r + 1):
                    if (r, s) > (p, q):
                        continue
                    value = eri[p, q, r, s]
                    if value != 0.0:
                        lines.append(_entry(value, p + 1, q + 1, r + 1, s + 1))
    for p in range(n):
        for q in range(p + 1):
            value = ints.one_body[p, q]
            if value != 0.0:
                lines.append(_entry(value, p + 1, q + 1, 0, 0))
    if n or ints.core_energy != 0.0:
        lines.append(_entry(ints.core_energy, 0, 0, 0, 0))
    return '\n'.join(lines) + '\n'


def read_fcidump(path) -> IntegralSet:
    with open(path, 'r', encoding='utf-8') as f:
        return parse_fcidump(f.read())


def save_fcidump(ints: IntegralSet, path) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        f.write(write_fcidump(ints))


# ============================================================================
# Model Hamiltonians
# ============================================================================

def build_hubbard(n_sites: int, t: float, u: float, periodic: bool = False,
                  n_electrons: Optional[int] = None) -> IntegralSet:
    """
    Hubbard chain with nearest-neighbour hopping -t and on-site repulsion u.

    Half filling unless n_electrons is given. A periodic chain of two sites
    keeps its single bond.
    """
    if n_sites < 1:
        raise ValueError(f"Hubbard model needs at least one site, got {n_sites}")
    h = np.zeros((n_sites, n_sites))
    for i in range(n_sites - 1):
        h[i, i + 1] = h[i + 1, i] = -t
    if periodic and n_sites >= 3:
        h[0, n_sites - 1] = h[n_sites - 1, 0] = -t
    eri = np.zeros((n_sites,) * 4)
    for i in range(n_sites):
        eri[i, i, i, i] = u
    return IntegralSet(
        n_spatial=n_sites,
        n_electrons=n_sites if n_electrons is None else n_electrons,
        core_energy=0.0,
        one_body=h,
        two_body=eri,
    )


# ============================================================================
# Orthonormalization
# ============================================================================

def lowdin_orthogonalize(ints_nonorthogonal: IntegralSet, s: np.ndarray) -> IntegralSet:
    """Transform integrals to the symmetrically orthogonalized basis X = S^(-1/2)"""
    s = np.asarray(s, dtype=float)
    n = ints_nonorthogonal.n_spatial
    if s.shape != (n, n):
        raise ValueError(f"Overlap shape {s.shape} does not match n_spatial={n}")
    if n and np.max(np.abs(s - s.T)) > SYMMETRY_TOL:
        raise ValueError("Overlap matrix is not symmetric")
    if np.array_equal(s, np.eye(n)):
        return ints_nonorthogonal

    x = lowdin_matrix(s)

    return IntegralSet(
        n_spatial=n,
        n_electrons=ints_nonorthogonal.n_electrons,
        core_energy=ints_nonorthogonal.core_energy,
        one_body=transform_one_body(ints_nonorthogonal.one_body, x),
        two_body=transform_two_body(ints_nonorthogonal.two_body, x),
        ms2=ints_nonorthogonal.ms2,
    )


def lowdin_matrix(s: np.ndarray) -> np.ndarray:
    """S^(-1/2) for a positive-definite overlap"""
    eigenvalues, vectors = scipy.linalg.eigh(np.asarray(s, dtype=float))
    if eigenvalues[0] <= OVERLAP_EIGEN_MIN:
        raise ConditioningError(float(eigenvalues[0]))
    return (vectors * eigenvalues ** -0.5) @ vectors.T
