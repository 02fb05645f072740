import numpy as np
import pytest

from lindbloch.algebra import StructureTensor, build_generators, structure_constants
from lindbloch.propagator import EvolutionProblem, GammaProfile


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def half_eps():
    return StructureTensor.levi_civita(0.5)


@pytest.fixture(scope="session")
def pauli():
    basis = build_generators(2)
    return basis, structure_constants(basis)


def dephasing_problem(f, gamma=1.0, omega0=1.0, r0=(1.0, 1.0, 1.0), picture="heisenberg"):
    """H = omega0 sz, L = sqrt(gamma) sz at the Bloch level."""
    return EvolutionProblem(f, np.array([0.0, 0.0, omega0]),
                            ((np.array([0.0, 0.0, np.sqrt(gamma)]), GammaProfile.constant()),),
                            np.array(r0, dtype=float), picture)


def sigma_x_problem(f, gamma, omega0=1.0, r0=(1.0, 0.0, 0.0)):
    """H = omega0 sz, L = sqrt(gamma) sx."""
    return EvolutionProblem(f, np.array([0.0, 0.0, omega0]),
                            ((np.array([np.sqrt(gamma), 0.0, 0.0]), GammaProfile.constant()),),
                            np.array(r0, dtype=float))


def random_matrix_problem(n, rng, n_lindblads=1, h_scale=1.0, l_scale=0.5):
    """Random Hermitian H, Hermitian L_k and full-rank rho0 in the trace-2 basis."""
    from lindbloch.oracle import MatrixProblem, random_density_matrix, random_hermitian

    H = random_hermitian(n, rng, h_scale)
    Ls = tuple(random_hermitian(n, rng, l_scale) for _ in range(n_lindblads))
    return MatrixProblem(H, Ls, (), random_density_matrix(n, rng))


def bloch_problem(mp, basis, picture="heisenberg"):
    return EvolutionProblem.from_operators(basis, mp.hamiltonian, mp.lindblads, mp.gammas,
                                           rho0=mp.rho0, picture=picture)
