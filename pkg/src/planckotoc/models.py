"""The three quantum systems: kicked rotor, LMG (two-site Bose-Hubbard), inverted oscillator."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import dst

from .numerics import SpectralDecomp, dagger, eig_hermitian
from .planck import (PhaseSpaceGrid, PlanckBasis, build_discrete_fock_basis,
                     build_position_slice_basis, fock_side, fourier_matrix,
                     momentum_samples, position_samples)

TWO_PI = 2 * math.pi


# -- kicked rotor -----------------------------------------------------------

@dataclass(frozen=True)
class KickedRotorSpec:
    """Kicked rotor on the torus ``[0, 2pi)^2`` with ``L x L`` Planck cells.

    The Hilbert-space dimension is ``D = L**2`` and ``hbar = 2 pi / D``.
    """

    K: float
    L: int = 30

    def __post_init__(self):
        if self.L < 2:
            raise ValueError("L must be at least 2")
        if self.K < 0:
            raise ValueError("K must be non-negative")

    @property
    def D(self) -> int:
        return self.L * self.L

    @property
    def hbar(self) -> float:
        return TWO_PI / self.D

    def grid(self) -> PhaseSpaceGrid:
        return PhaseSpaceGrid(0.0, 0.0, TWO_PI, TWO_PI, self.L, self.L, self.hbar,
                              periodic_q=True, periodic_p=True)

    def positions(self) -> np.ndarray:
        return position_samples(self.grid(), self.D, 0.5)

    def momenta(self) -> np.ndarray:
        # integer multiples of hbar: periodic wavefunctions on the circle
        return momentum_samples(self.grid(), self.D, 0.0)

    def metadata(self) -> dict:
        return {"model": "kicked_rotor", "K": self.K, "L": self.L, "D": self.D, "hbar": self.hbar}


def kicked_rotor_floquet(spec: KickedRotorSpec) -> np.ndarray:
    """One-period operator ``exp(-i p^2 / 2hbar) exp(-i K cos(q) / hbar)``.

    Kick first, then free rotation, in the position-grid frame. Both factors
    are diagonal in their own frame; the frames are joined by an explicit
    DFT matrix so the result is unitary to machine precision. For even ``D``
    the kinetic phase is periodic in momentum, i.e. an exact torus
    quantization of the standard map.
    """
    q = spec.positions()
    p = spec.momenta()
    F = fourier_matrix(q, p, spec.hbar)
    free = np.exp(-0.5j * p**2 / spec.hbar)
    kick = np.exp(-1j * spec.K * np.cos(q) / spec.hbar)
    return ((F * free) @ dagger(F)) * kick[None, :]


def kicked_rotor_basis(spec: KickedRotorSpec) -> PlanckBasis:
    return build_position_slice_basis(spec.grid(), spec.D, sample_offset=0.5)


def kicked_rotor_momentum_operator(spec: KickedRotorSpec) -> np.ndarray:
    F = fourier_matrix(spec.positions(), spec.momenta(), spec.hbar)
    p = (F * spec.momenta()) @ dagger(F)
    return (p + dagger(p)) / 2


# -- LMG ---------------------------------------------------------------------

@dataclass(frozen=True)
class LmgSpec:
    """Two-mode boson model with ``N`` particles and interaction ``xi``.

    ``H = (a1^+ a0 + a0^+ a1) / 2 + (xi / 2N) (n1 - n0)^2`` with the
    effective Planck constant ``1/N``. ``xi = -2`` gives the
    ``-(1/N)(n1 - n0)^2`` form and a saddle at ``(pi, 0)``.
    """

    N: int
    xi: float = -2.0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be at least 1")

    @property
    def hbar_eff(self) -> float:
        return 1.0 / self.N

    @property
    def D(self) -> int:
        return self.N + 1

    @property
    def L(self) -> int:
        return fock_side(self.N)

    @classmethod
    def from_cells(cls, L: int, xi: float = -2.0) -> "LmgSpec":
        return cls(N=L * L - 1, xi=xi)

    def metadata(self) -> dict:
        return {"model": "lmg", "N": self.N, "xi": self.xi, "D": self.D, "hbar": self.hbar_eff}


def lmg_hamiltonian(spec: LmgSpec) -> np.ndarray:
    """Real symmetric Hamiltonian in the Fock basis ``|s, N - s>``, ``s = 0..N``."""
    N = spec.N
    s = np.arange(N + 1, dtype=float)
    H = np.diag(spec.xi / (2 * N) * (N - 2 * s) ** 2)
    hop = 0.5 * np.sqrt((s[:-1] + 1) * (N - s[:-1]))
    H += np.diag(hop, 1) + np.diag(hop, -1)
    return H


def lmg_momentum_operator(N: int) -> np.ndarray:
    """``p = (N - 2s) / (2N)`` on ``|s, N - s>``; spectrum in ``[-1/2, 1/2]``."""
    if N < 1:
        raise ValueError("N must be at least 1")
    s = np.arange(N + 1)
    return np.diag((N - 2 * s) / (2 * N))


def lmg_parity(N: int) -> np.ndarray:
    """Reflection ``|s, N - s> -> |N - s, s>``."""
    return np.eye(N + 1)[::-1]


def lmg_basis(spec: LmgSpec, q_origin: float = 0.0) -> PlanckBasis:
    return build_discrete_fock_basis(spec.N, spec.L, q_origin=q_origin)


# -- inverted harmonic oscillator -------------------------------------------

class NyquistError(ValueError):
    """Position grid too coarse for the requested momentum cutoff."""


def _nearest_odd(x: float) -> int:
    k = int(round(x))
    if k % 2 == 0:
        k = k + 1 if x >= k else k - 1
    return max(k, 1)


@dataclass(frozen=True)
class IhoSpec:
    """``H = (p^2 - q^2) / 2`` on ``q in [q_min, q_max]`` with hard walls.

    The position grid spacing is derived from ``dx`` after rounding so that
    the grid factorizes into ``L_q x L_p`` Planck cells, both odd so one
    cell is centered on the saddle ``(0, 0)``. ``L_q`` is the odd integer
    closest to ``q_extent / sqrt(2 pi hbar)`` (nearly square cells).
    """

    hbar: float
    dx: float
    p_cutoff: float = 1.0
    q_min: float = -0.5
    q_max: float = 0.5
    kinetic: str = "spectral"

    def __post_init__(self):
        if self.hbar <= 0 or self.dx <= 0:
            raise ValueError("hbar and dx must be positive")
        if self.q_max <= self.q_min:
            raise ValueError("empty q domain")
        if self.kinetic not in ("spectral", "finite_difference"):
            raise ValueError(f"unknown kinetic realization {self.kinetic!r}")
        if self.p_max < self.p_cutoff:
            raise NyquistError(
                f"grid momentum range |p| <= {self.p_max:.4g} does not reach the cutoff {self.p_cutoff}; "
                f"use dx <= {math.pi * self.hbar / self.p_cutoff:.4g}")

    @property
    def q_extent(self) -> float:
        return self.q_max - self.q_min

    @property
    def L_q(self) -> int:
        return _nearest_odd(self.q_extent / math.sqrt(TWO_PI * self.hbar))

    @property
    def L_p(self) -> int:
        return _nearest_odd(self.q_extent / (self.L_q * self.dx))

    @property
    def points(self) -> int:
        return self.L_q * self.L_p

    @property
    def grid_dx(self) -> float:
        return self.q_extent / self.points

    @property
    def p_max(self) -> float:
        """Nyquist momentum ``pi hbar / dx`` of the realized grid."""
        return math.pi * self.hbar / self.grid_dx

    def grid(self) -> PhaseSpaceGrid:
        dq = self.q_extent / self.L_q
        dp = TWO_PI * self.hbar / dq
        return PhaseSpaceGrid(self.q_min, -self.L_p * dp / 2, self.q_extent, self.L_p * dp,
                              self.L_q, self.L_p, self.hbar)

    def positions(self) -> np.ndarray:
        return position_samples(self.grid(), self.points, 0.5)

    def metadata(self) -> dict:
        return {"model": "iho", "hbar": self.hbar, "dx": self.grid_dx, "D": self.points,
                "p_cutoff": self.p_cutoff, "p_max": self.p_max, "q_min": self.q_min,
                "q_max": self.q_max, "kinetic": self.kinetic}


def _sine_kinetic(M: int, length: float, hbar: float) -> np.ndarray:
    # Dirichlet eigenfunctions sin(k pi (q - q_min) / length) sampled at the midpoints
    S = dst(np.eye(M), type=2, norm="ortho", axis=0)
    k = np.arange(1, M + 1)
    energies = 0.5 * (hbar * math.pi * k / length) ** 2
    T = (S.T * energies) @ S
    return (T + T.T) / 2


def _fd_kinetic(M: int, dx: float, hbar: float) -> np.ndarray:
    c = hbar**2 / (2 * dx**2)
    return np.diag(np.full(M, 2 * c)) - np.diag(np.full(M - 1, c), 1) - np.diag(np.full(M - 1, c), -1)


def iho_hamiltonian(spec: IhoSpec, inverted: bool = True) -> np.ndarray:
    """Grid Hamiltonian ``-hbar^2/2 d^2/dq^2 -/+ q^2/2`` with Dirichlet walls.

    ``inverted=False`` flips the potential to the ordinary oscillator, used
    as an analytic check of the kinetic term.
    """
    M = spec.points
    if spec.kinetic == "spectral":
        T = _sine_kinetic(M, spec.q_extent, spec.hbar)
    else:
        T = _fd_kinetic(M, spec.grid_dx, spec.hbar)
    q = spec.positions()
    V = -0.5 * q**2 if inverted else 0.5 * q**2
    return T + np.diag(V)


def iho_position_operator(spec: IhoSpec) -> np.ndarray:
    return np.diag(spec.positions()).astype(complex)


def iho_momentum_operator(spec: IhoSpec) -> np.ndarray:
    """Fourier (periodic) momentum on the position grid."""
    grid = spec.grid()
    q = spec.positions()
    p = momentum_samples(grid, spec.points, 0.5)
    F = fourier_matrix(q, p, spec.hbar)
    P = (F * p) @ dagger(F)
    return (P + dagger(P)) / 2


def iho_basis(spec: IhoSpec) -> PlanckBasis:
    return build_position_slice_basis(spec.grid(), spec.points, sample_offset=0.5)


# -- thermal states -----------------------------------------------------------

def gibbs_weights(decomp: SpectralDecomp, T: float) -> np.ndarray:
    if T <= 0:
        raise ValueError("temperature must be positive")
    E = decomp.eigenvalues
    w = np.exp(-(E - E.min()) / T)
    return w / w.sum()


def gibbs_state(H: np.ndarray, T: float, decomp: SpectralDecomp | None = None) -> np.ndarray:
    """``exp(-H/T) / Tr exp(-H/T)``, shifted by the ground energy against overflow."""
    if T <= 0:
        raise ValueError("temperature must be positive")
    if decomp is None:
        decomp = eig_hermitian(H)
    w = gibbs_weights(decomp, T)
    V = decomp.eigenvectors
    rho = (V * w) @ dagger(V)
    return (rho + dagger(rho)) / 2


def cumulative_population(H: np.ndarray, T: float, energy: float,
                          decomp: SpectralDecomp | None = None) -> float:
    """Thermal probability carried by eigenstates with energy below ``energy``."""
    if decomp is None:
        decomp = eig_hermitian(H)
    w = gibbs_weights(decomp, T)
    return float(w[decomp.eigenvalues < energy].sum())
