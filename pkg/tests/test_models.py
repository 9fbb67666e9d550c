import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import lmg_matrix
from planckotoc import models
from planckotoc.numerics import dagger, eig_hermitian, is_hermitian, unitarity_residual
from planckotoc.planck import fourier_matrix, frame_residual


def test_kicked_rotor_hbar():
    spec = models.KickedRotorSpec(K=4.7, L=30)
    assert spec.D == 900
    assert round(spec.hbar, 3) == 0.007
    assert abs(spec.hbar - 2 * math.pi / 900) < 1e-15


def test_kicked_rotor_unitary(kr47):
    _, U, basis, _ = kr47
    assert unitarity_residual(U) < 1e-12
    assert frame_residual(basis) < 1e-12


def test_kicked_rotor_free_rotation_diagonal_in_momentum():
    spec = models.KickedRotorSpec(K=0.0, L=6)
    U = models.kicked_rotor_floquet(spec)
    F = fourier_matrix(spec.positions(), spec.momenta(), spec.hbar)
    Up = dagger(F) @ U @ F
    off = Up - np.diag(np.diag(Up))
    assert np.abs(off).max() < 1e-12
    assert np.allclose(np.diag(Up), np.exp(-0.5j * spec.momenta() ** 2 / spec.hbar), atol=1e-12)


def test_kicked_rotor_free_rotation_keeps_momentum_populations():
    spec = models.KickedRotorSpec(K=0.0, L=6)
    U = models.kicked_rotor_floquet(spec)
    F = fourier_matrix(spec.positions(), spec.momenta(), spec.hbar)
    rng = np.random.default_rng(0)
    psi = rng.standard_normal(spec.D) + 1j * rng.standard_normal(spec.D)
    pops0 = np.abs(dagger(F) @ psi) ** 2
    for _ in range(5):
        psi = U @ psi
    assert np.allclose(np.abs(dagger(F) @ psi) ** 2, pops0, atol=1e-10)


def test_kicked_rotor_kinetic_phase_is_periodic_in_momentum():
    # even D: exp(-i p^2 / 2 hbar) repeats with period 2 pi in p
    spec = models.KickedRotorSpec(K=0.0, L=4)
    p = spec.momenta()
    phase = np.exp(-0.5j * p**2 / spec.hbar)
    shifted = np.exp(-0.5j * (p + 2 * math.pi) ** 2 / spec.hbar)
    assert np.allclose(phase, shifted, atol=1e-10)


def test_kicked_rotor_rejects_bad_parameters():
    with pytest.raises(ValueError):
        models.KickedRotorSpec(K=-1.0)
    with pytest.raises(ValueError):
        models.KickedRotorSpec(K=1.0, L=1)


def test_kicked_rotor_momentum_operator():
    spec = models.KickedRotorSpec(K=1.0, L=4)
    p = models.kicked_rotor_momentum_operator(spec)
    assert is_hermitian(p)
    assert np.allclose(np.sort(np.linalg.eigvalsh(p)), np.sort(spec.momenta()))


def test_lmg_one_particle():
    H = models.lmg_hamiltonian(models.LmgSpec(N=1))
    assert np.allclose(H, [[-1, 0.5], [0.5, -1]])


def test_lmg_two_particle_hopping():
    H = models.lmg_hamiltonian(models.LmgSpec(N=2))
    assert abs(H[0, 1] - math.sqrt(2) / 2) < 1e-15
    assert abs(H[1, 2] - math.sqrt(2) / 2) < 1e-15


@given(st.integers(1, 40), st.floats(-3, 3))
def test_lmg_matches_oracle_and_is_real_symmetric(N, xi):
    H = models.lmg_hamiltonian(models.LmgSpec(N=N, xi=xi))
    assert np.isrealobj(H)
    assert np.array_equal(H, H.T)
    assert np.abs(H - lmg_matrix(N, xi)).max() < 1e-12


def test_lmg_parity_sectors():
    H = models.lmg_hamiltonian(models.LmgSpec(N=8))
    Pi = models.lmg_parity(8)
    assert np.abs(Pi @ H - H @ Pi).max() < 1e-14
    E = eig_hermitian(H)
    parities = np.einsum("ik,ij,jk->k", E.eigenvectors, Pi, E.eigenvectors)
    assert np.allclose(np.abs(parities), 1, atol=1e-10)
    assert np.sum(parities > 0) == 5 and np.sum(parities < 0) == 4


def test_lmg_momentum_operator_examples():
    assert np.allclose(np.diag(models.lmg_momentum_operator(1)), [0.5, -0.5])
    assert np.allclose(np.diag(models.lmg_momentum_operator(2)), [0.5, 0, -0.5])
    with pytest.raises(ValueError):
        models.lmg_momentum_operator(0)


def test_lmg_spectrum_approaches_classical_energy_range():
    # H / N -> sqrt(1/4 - p^2) cos q + 2 xi p^2; at xi = -2 the range is [-17/16, 1/2]
    # (minimum at cos q = -1, p^2 = 15/64)
    gaps_low, gaps_high = [], []
    for L in (5, 9, 15):
        spec = models.LmgSpec.from_cells(L)
        E = np.linalg.eigvalsh(models.lmg_hamiltonian(spec)) / spec.N
        gaps_low.append(abs(E.min() + 17 / 16))
        gaps_high.append(0.5 - E.max())
    assert gaps_low[0] > gaps_low[1] > gaps_low[2] and gaps_low[2] < 5e-4
    assert min(gaps_high) > 0
    assert gaps_high[0] > gaps_high[1] > gaps_high[2] and gaps_high[2] < 5e-3


def test_lmg_spec_geometry():
    spec = models.LmgSpec.from_cells(41)
    assert spec.N == 1680 and spec.D == 1681 and spec.L == 41
    assert spec.hbar_eff == 1 / 1680
    with pytest.raises(ValueError):
        models.LmgSpec(N=0)


def test_lmg_basis_complete(lmg_small):
    spec, H, basis = lmg_small
    assert basis.D == spec.D
    assert frame_residual(basis) < 1e-12


def test_iho_desk_and_large_scale_grids():
    desk = models.IhoSpec(hbar=0.002, dx=0.002)
    assert (desk.L_q, desk.L_p, desk.points) == (9, 55, 495)
    big = models.IhoSpec(hbar=0.0005, dx=0.0003)
    assert (big.L_q, big.L_p, big.points) == (17, 197, 3349)
    for spec in (desk, big):
        assert spec.p_max >= spec.p_cutoff
        g = spec.grid()
        assert abs(g.dq * g.dp - 2 * math.pi * spec.hbar) < 1e-15


def test_iho_nyquist_guard():
    with pytest.raises(models.NyquistError, match="dx <="):
        models.IhoSpec(hbar=0.002, dx=0.01)


def test_iho_rejects_bad_parameters():
    with pytest.raises(ValueError):
        models.IhoSpec(hbar=0.0, dx=0.001)
    with pytest.raises(ValueError):
        models.IhoSpec(hbar=0.002, dx=0.002, q_min=0.5, q_max=-0.5)
    with pytest.raises(ValueError):
        models.IhoSpec(hbar=0.002, dx=0.002, kinetic="chebyshev")


@pytest.mark.parametrize("kinetic", ["spectral", "finite_difference"])
def test_harmonic_levels(kinetic):
    spec = models.IhoSpec(hbar=0.002, dx=0.002, kinetic=kinetic)
    E = np.linalg.eigvalsh(models.iho_hamiltonian(spec, inverted=False))
    n = np.arange(6)
    assert np.abs(E[:6] / spec.hbar - (n + 0.5)).max() / 0.5 < 0.01


def test_kinetic_realizations_agree_at_low_energy():
    a = np.linalg.eigvalsh(models.iho_hamiltonian(models.IhoSpec(hbar=0.002, dx=0.002)))
    b = np.linalg.eigvalsh(models.iho_hamiltonian(
        models.IhoSpec(hbar=0.002, dx=0.002, kinetic="finite_difference")))
    # levels near the top of the inverted well
    mid = np.argmin(np.abs(a))
    sl = slice(mid - 3, mid + 3)
    assert np.abs(a[sl] - b[sl]).max() < 1e-3 * np.abs(a).max()


def test_iho_operators_hermitian():
    spec = models.IhoSpec(hbar=0.002, dx=0.002)
    H = models.iho_hamiltonian(spec)
    assert np.array_equal(H, H.T)
    assert is_hermitian(models.iho_momentum_operator(spec))
    q = np.diag(models.iho_position_operator(spec)).real
    assert q.min() > -0.5 and q.max() < 0.5
    assert frame_residual(models.iho_basis(spec)) < 1e-10


def test_gibbs_infinite_temperature_is_uniform():
    H = lmg_matrix(6)
    rho = models.gibbs_state(H, 1e9)
    assert np.abs(rho - np.eye(7) / 7).max() < 1e-8


def test_gibbs_two_level():
    H = np.diag([0.0, 1.0])
    rho = models.gibbs_state(H, 1.0)
    z = 1 + math.exp(-1)
    assert np.allclose(np.diag(rho), [1 / z, math.exp(-1) / z])
    assert abs(models.cumulative_population(H, 1.0, 0.5) - 1 / z) < 1e-14


@given(st.floats(0.01, 100), st.integers(0, 1000))
def test_gibbs_state_is_a_density_matrix(T, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((5, 5))
    H = (X + X.T) / 2
    rho = models.gibbs_state(H, T)
    assert abs(np.trace(rho) - 1) < 1e-12
    assert np.linalg.eigvalsh(rho).min() > -1e-12
    assert np.abs(rho @ H - H @ rho).max() < 1e-10


def test_gibbs_rejects_non_positive_temperature():
    for T in (0.0, -1.0):
        with pytest.raises(ValueError):
            models.gibbs_state(np.eye(2), T)
        with pytest.raises(ValueError):
            models.cumulative_population(np.eye(2), T, 0.0)
