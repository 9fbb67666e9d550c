import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from oracles import lmg_matrix, pauli, random_hermitian, random_state
from planckotoc.numerics import (DimensionError, HermiticityError, SpectralPropagator, commutator,
                                 commutator_sq_diagonal, eig_hermitian, expectation, heisenberg_conjugate,
                                 is_hermitian, is_unitary, mixed_matmul, mixed_matmul_right,
                                 propagator_from_hamiltonian, unitarity_residual)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_eig_identity():
    d = eig_hermitian(np.eye(3))
    assert np.allclose(d.eigenvalues, 1)
    assert is_unitary(d.eigenvectors)


def test_eig_diagonal_sorted():
    d = eig_hermitian(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(d.eigenvalues, [1, 2, 3])


def test_eig_rejects_non_hermitian():
    with pytest.raises(HermiticityError, match="1.000e"):
        eig_hermitian(np.array([[0, 1], [0, 0]], dtype=complex))


def test_eig_rejects_non_square():
    with pytest.raises(DimensionError):
        eig_hermitian(np.zeros((2, 3)))


@given(seeds)
def test_eig_reconstruction(seed):
    A = random_hermitian(np.random.default_rng(seed), 8)
    d = eig_hermitian(A)
    assert np.all(np.diff(d.eigenvalues) >= 0)
    assert np.abs(d.reconstruct() - A).max() < 1e-10
    assert unitarity_residual(d.eigenvectors) < 1e-10


def test_propagator_zero_hamiltonian():
    assert np.allclose(propagator_from_hamiltonian(np.zeros((4, 4)), 0.3), np.eye(4), atol=1e-15)


def test_propagator_pi_phase():
    hbar, dt = 0.7, 0.2
    U = propagator_from_hamiltonian(np.diag([0.0, hbar * np.pi / dt]), dt, hbar)
    assert np.allclose(U, np.diag([1, -1]), atol=1e-12)


def test_propagator_lmg_unitary():
    U = propagator_from_hamiltonian(lmg_matrix(8), 0.1, 1.0)
    assert unitarity_residual(U) < 1e-12
    assert np.abs(U - expm(-0.1j * lmg_matrix(8))).max() < 1e-12


def test_propagator_rejects_bad_args():
    with pytest.raises(ValueError):
        propagator_from_hamiltonian(np.eye(2), 0.0)
    with pytest.raises(ValueError):
        propagator_from_hamiltonian(np.eye(2), 1.0, hbar=-1)
    d = eig_hermitian(np.eye(3))
    with pytest.raises(DimensionError):
        propagator_from_hamiltonian(np.eye(2), 1.0, decomp=d)


def test_commutator_sq_self_and_diagonal():
    A = random_hermitian(np.random.default_rng(0), 5)
    assert np.all(commutator_sq_diagonal(A, A) == 0)
    assert np.all(commutator_sq_diagonal(np.diag([1.0, 2, 3]), np.diag([4.0, 5, 6])) == 0)


def test_commutator_sq_pauli():
    sx, sy, _ = pauli()
    assert np.allclose(commutator_sq_diagonal(sx, sy), [4, 4], atol=1e-15)


def test_commutator_dimension_mismatch():
    with pytest.raises(DimensionError):
        commutator(np.eye(2), np.eye(3))


@given(seeds)
def test_commutator_sq_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    A, B = random_hermitian(rng, 8), random_hermitian(rng, 8)
    C = 1j * (A @ B - B @ A)
    brute = np.array([np.real(np.eye(8)[k] @ C @ C @ np.eye(8)[k]) for k in range(8)])
    diag = commutator_sq_diagonal(A, B)
    assert np.abs(diag - brute).max() < 1e-10
    assert diag.min() >= -1e-12
    assert is_hermitian(C)


@given(seeds, st.floats(min_value=-5, max_value=5))
def test_unitary_preserves_norm(seed, t):
    rng = np.random.default_rng(seed)
    prop = SpectralPropagator(random_hermitian(rng, 8))
    psi = random_state(rng, 8)
    assert abs(np.linalg.norm(prop.evolve(psi, t)) - 1) < 1e-10
    assert abs(np.linalg.norm(prop.unitary(t) @ psi) - 1) < 1e-10


@given(seeds, st.floats(min_value=0.01, max_value=3))
def test_spectral_heisenberg_matches_expm(seed, t):
    rng = np.random.default_rng(seed)
    H, A = random_hermitian(rng, 6), random_hermitian(rng, 6)
    hbar = 0.5
    prop = SpectralPropagator(H, hbar=hbar)
    U = expm(-1j * H * t / hbar)
    assert np.abs(prop.unitary(t) - U).max() < 1e-10
    assert np.abs(prop.heisenberg(A, t) - heisenberg_conjugate(U, A)).max() < 1e-10


def test_real_eigenvector_path_matches_expm():
    rng = np.random.default_rng(3)
    H = lmg_matrix(10)
    A = random_hermitian(rng, 11)
    prop = SpectralPropagator(H)
    assert np.isrealobj(prop.decomp.eigenvectors)
    assert np.abs(prop.heisenberg(A, 0.7) - heisenberg_conjugate(expm(-0.7j * H), A)).max() < 1e-10


def test_mixed_matmul_matches_plain():
    rng = np.random.default_rng(1)
    R = rng.standard_normal((7, 5))
    C = rng.standard_normal((5, 4)) + 1j * rng.standard_normal((5, 4))
    v = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    assert np.allclose(mixed_matmul(R, C), R @ C)
    assert np.allclose(mixed_matmul(R, v), R @ v)
    C2 = rng.standard_normal((4, 7)) + 1j * rng.standard_normal((4, 7))
    assert np.allclose(mixed_matmul_right(C2, R), C2 @ R)


def test_expectation_real_for_hermitian():
    rng = np.random.default_rng(2)
    A, psi = random_hermitian(rng, 5), random_state(rng, 5)
    assert abs(expectation(A, psi).imag) < 1e-12
