"""
Shared fixtures: model Hamiltonians, STO-3G hydrogen chains and the stretched
two-pair chain used by scan tests
"""
import os
import sys

import numpy as np
import pytest
import scipy.special

# Add the app directory to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from integrals import (IntegralSet, build_hubbard, lowdin_orthogonalize, save_fcidump,  # noqa: E402
                       symmetrize_two_body)

FIXTURE_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'fixtures')

DIMER_ENERGY = (4.0 - np.sqrt(16.0 + 16.0)) / 2.0

# H 1s, zeta = 1.24
STO3G_H_EXPONENTS = np.array([3.42525091, 0.62391373, 0.16885540])
STO3G_H_COEFFICIENTS = np.array([0.15432897, 0.53532814, 0.44463454])

H2_BOND = 1.4
H4_SEPARATIONS = (1.4, 2.0, 3.0, 6.0, 25.0)


def boys_zero(x):
    """F_0(x) from the regularized lower incomplete gamma function"""
    x = np.asarray(x, dtype=float)
    small = x < 1e-12
    safe = np.where(small, 1.0, x)
    value = scipy.special.gamma(0.5) * scipy.special.gammainc(0.5, safe) / (2.0 * np.sqrt(safe))
    return np.where(small, 1.0 - x / 3.0, value)


def hydrogen_chain(positions) -> IntegralSet:
    """
    STO-3G integrals for neutral hydrogen atoms on the z axis (positions in
    bohr), Lowdin-orthogonalized so that orbital i stays centred on atom i.
    """
    z = np.asarray(positions, dtype=float)
    n = len(z)
    centres = np.zeros((n, 3))
    centres[:, 2] = z
    coeff = STO3G_H_COEFFICIENTS * (2.0 * STO3G_H_EXPONENTS / np.pi) ** 0.75

    # primitive pairs are indexed (atom a, primitive i, atom b, primitive j)
    a = STO3G_H_EXPONENTS[None, :, None, None]
    b = STO3G_H_EXPONENTS[None, None, None, :]
    p = a + b
    reduced = a * b / p
    dist2 = np.sum((centres[:, None, :] - centres[None, :, :]) ** 2, axis=-1)[:, None, :, None]
    prefactor = np.exp(-reduced * dist2)
    centre_p = (a[..., None] * centres[:, None, None, None, :]
                + b[..., None] * centres[None, None, :, None, :]) / p[..., None]

    overlap = (np.pi / p) ** 1.5 * prefactor
    kinetic = reduced * (3.0 - 2.0 * reduced * dist2) * overlap
    attraction = np.zeros_like(overlap)
    for c in centres:
        attraction -= 2.0 * np.pi / p * prefactor * boys_zero(p * np.sum((centre_p - c) ** 2, axis=-1))
    s = np.einsum('i,j,aibj->ab', coeff, coeff, overlap)
    h = np.einsum('i,j,aibj->ab', coeff, coeff, kinetic + attraction)

    m = overlap.size
    p_pair = np.broadcast_to(p, overlap.shape).reshape(m)
    k_pair = prefactor.reshape(m)
    centre_pair = centre_p.reshape(m, 3)
    total = p_pair[:, None] + p_pair[None, :]
    sep2 = np.sum((centre_pair[:, None, :] - centre_pair[None, :, :]) ** 2, axis=-1)
    primitive_eri = (2.0 * np.pi ** 2.5 / (p_pair[:, None] * p_pair[None, :] * np.sqrt(total))
                     * np.outer(k_pair, k_pair)
                     * boys_zero(np.outer(p_pair, p_pair) / total * sep2))
    eri = np.einsum('i,j,k,l,aibjckdl->abcd', coeff, coeff, coeff, coeff,
                    primitive_eri.reshape((n, 3) * 4), optimize=True)

    nuclear = sum(1.0 / abs(z[i] - z[j]) for i in range(n) for j in range(i))
    ao = IntegralSet(n_spatial=n, n_electrons=n, core_energy=nuclear, one_body=0.5 * (h + h.T),
                     two_body=symmetrize_two_body(eri))
    orthogonal = lowdin_orthogonalize(ao, 0.5 * (s + s.T))
    return IntegralSet(
        n_spatial=n,
        n_electrons=n,
        core_energy=nuclear,
        one_body=0.5 * (orthogonal.one_body + orthogonal.one_body.T),
        two_body=symmetrize_two_body(orthogonal.two_body),
    )


def h4_pair_chain(separation: float, bond: float = H2_BOND) -> IntegralSet:
    """Two H2 molecules end to end, `separation` bohr apart"""
    return hydrogen_chain([0.0, bond, bond + separation, 2.0 * bond + separation])


def two_pair_chain(separation: float, t_pair: float = 1.0, u: float = 2.0, decay: float = 2.0) -> IntegralSet:
    """
    Four sites forming two bonded pairs (0-1 and 2-3) whose inter-pair hopping
    decays as exp(-decay * separation). separation=inf decouples the pairs.
    """
    t_inter = 0.0 if np.isinf(separation) else t_pair * np.exp(-decay * separation)
    h = np.zeros((4, 4))
    h[0, 1] = h[1, 0] = -t_pair
    h[2, 3] = h[3, 2] = -t_pair
    h[1, 2] = h[2, 1] = -t_inter
    eri = np.zeros((4, 4, 4, 4))
    for i in range(4):
        eri[i, i, i, i] = u
    return IntegralSet(n_spatial=4, n_electrons=4, core_energy=0.0, one_body=h, two_body=eri)


def single_pair(t_pair: float = 1.0, u: float = 2.0) -> IntegralSet:
    return build_hubbard(2, t_pair, u)


@pytest.fixture
def dimer():
    """Hubbard dimer, t=1, U=4, half filling"""
    return build_hubbard(2, 1.0, 4.0)


@pytest.fixture
def free_dimer():
    return build_hubbard(2, 1.0, 0.0)


@pytest.fixture
def single_orbital():
    return IntegralSet(
        n_spatial=1,
        n_electrons=2,
        core_energy=0.3,
        one_body=np.array([[-1.0]]),
        two_body=np.full((1, 1, 1, 1), 0.5),
    )


@pytest.fixture
def h2_fcidump_path():
    return os.path.join(FIXTURE_DIR, 'h2_sto3g_0.7414.fcidump')


@pytest.fixture
def chain_builder():
    return two_pair_chain


@pytest.fixture(scope='session')
def h4_fcidumps(tmp_path_factory):
    """H4 FCIDUMP files keyed by the H2-H2 separation"""
    directory = tmp_path_factory.mktemp('h4')
    paths = {}
    for separation in H4_SEPARATIONS:
        path = directory / f'h4_{separation:g}.fcidump'
        save_fcidump(h4_pair_chain(separation), path)
        paths[separation] = str(path)
    return paths
