"""Planck-cell bases and the macroscopic operators diagonal in them.

A :class:`PhaseSpaceGrid` partitions a rectangular phase-space box into
``L_q x L_p`` cells of area ``2 pi hbar``. A :class:`PlanckBasis` stores one
normalized state per cell as a column of a unitary ``frame`` expressed in a
model's computational basis (position grid, momentum grid, or Fock states).

Cells are indexed q-major: ``j = m * L_p + n`` with ``m`` the position index
and ``n`` the momentum index. Cell coordinates ``(Q, P)`` are the cell
centers ``origin + ((m + 1/2) dq, (n + 1/2) dp)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import ALGEBRA_TOL, dagger

POSITION_SLICE = "position_slice"
MOMENTUM_SLICE = "momentum_slice"
DISCRETE_FOCK = "discrete_fock"
EDGE_TOL = 1e-9


class GridError(ValueError):
    """Inconsistent phase-space grid or sampling."""


@dataclass(frozen=True)
class PhaseSpaceGrid:
    q_origin: float
    p_origin: float
    q_extent: float
    p_extent: float
    L_q: int
    L_p: int
    hbar: float
    periodic_q: bool = False
    periodic_p: bool = False

    def __post_init__(self):
        if self.L_q < 1 or self.L_p < 1:
            raise GridError("L_q and L_p must be positive")
        if self.q_extent <= 0 or self.p_extent <= 0 or self.hbar <= 0:
            raise GridError("extents and hbar must be positive")
        area = self.dq * self.dp
        target = 2 * math.pi * self.hbar
        if abs(area - target) > 1e-12 * target:
            raise GridError(f"cell area {area!r} differs from 2*pi*hbar = {target!r}")

    @property
    def dq(self) -> float:
        return self.q_extent / self.L_q

    @property
    def dp(self) -> float:
        return self.p_extent / self.L_p

    @property
    def D(self) -> int:
        return self.L_q * self.L_p

    def index(self, m, n):
        return np.asarray(m) * self.L_p + np.asarray(n)

    def mn(self, j):
        return np.divmod(np.asarray(j), self.L_p)

    @property
    def Q_centers(self) -> np.ndarray:
        return self.q_origin + (np.arange(self.L_q) + 0.5) * self.dq

    @property
    def P_centers(self) -> np.ndarray:
        return self.p_origin + (np.arange(self.L_p) + 0.5) * self.dp

    def cell_coords(self) -> np.ndarray:
        """(D, 2) array of cell centers in index order."""
        m, n = self.mn(np.arange(self.D))
        return np.column_stack([self.Q_centers[m], self.P_centers[n]])

    def wrap(self, q, p):
        """Map points into the box along periodic axes."""
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        if self.periodic_q:
            q = self.q_origin + np.mod(q - self.q_origin, self.q_extent)
        if self.periodic_p:
            p = self.p_origin + np.mod(p - self.p_origin, self.p_extent)
        return q, p

    def locate(self, q, p, clip: bool = False):
        """Cell index containing ``(q, p)``.

        Periodic axes are wrapped. Points outside a non-periodic axis give
        ``-1`` unless ``clip`` is set, in which case they go to the edge cell.
        """
        q, p = self.wrap(q, p)
        # points within EDGE_TOL (in cell units) below an edge go to the upper cell,
        # so images that land on edges are binned the same way regardless of rounding
        m = np.floor((q - self.q_origin) / self.dq + EDGE_TOL).astype(int)
        n = np.floor((p - self.p_origin) / self.dp + EDGE_TOL).astype(int)
        # floating wrap can land exactly on the upper edge
        if self.periodic_q:
            m = np.mod(m, self.L_q)
        if self.periodic_p:
            n = np.mod(n, self.L_p)
        if clip:
            m = np.clip(m, 0, self.L_q - 1)
            n = np.clip(n, 0, self.L_p - 1)
            return self.index(m, n)
        inside = (m >= 0) & (m < self.L_q) & (n >= 0) & (n < self.L_p)
        return np.where(inside, self.index(np.clip(m, 0, self.L_q - 1), np.clip(n, 0, self.L_p - 1)), -1)

    def dq_min_image(self, dq):
        dq = np.asarray(dq, dtype=float)
        if self.periodic_q:
            dq = dq - self.q_extent * np.round(dq / self.q_extent)
        return dq

    def dp_min_image(self, dp):
        dp = np.asarray(dp, dtype=float)
        if self.periodic_p:
            dp = dp - self.p_extent * np.round(dp / self.p_extent)
        return dp

    def metadata(self) -> dict:
        return {
            "q_origin": self.q_origin, "p_origin": self.p_origin,
            "q_extent": self.q_extent, "p_extent": self.p_extent,
            "L_q": self.L_q, "L_p": self.L_p, "hbar": self.hbar,
            "periodic_q": self.periodic_q, "periodic_p": self.periodic_p,
        }


@dataclass(frozen=True)
class PlanckBasis:
    """Orthonormal cell-localized basis.

    Attributes
    ----------
    grid : PhaseSpaceGrid
    frame : ndarray, shape (D, D)
        Column ``j`` is cell ``j``'s state in the computational basis.
    kind : str
        One of ``position_slice``, ``momentum_slice``, ``discrete_fock``.
    cell_coords : ndarray, shape (D, 2)
        Cell centers ``(Q, P)``.
    samples : ndarray
        Coordinate value attached to each computational basis state
        (positions, momenta, or Fock-state momenta ``p = n/N``).
    """

    grid: PhaseSpaceGrid
    frame: np.ndarray
    kind: str
    cell_coords: np.ndarray
    samples: np.ndarray = field(default=None)

    @property
    def D(self) -> int:
        return self.frame.shape[1]

    @property
    def Q(self) -> np.ndarray:
        return self.cell_coords[:, 0]

    @property
    def P(self) -> np.ndarray:
        return self.cell_coords[:, 1]

    def column(self, j: int) -> np.ndarray:
        return self.frame[:, j].copy()

    def cell_at(self, q: float, p: float) -> int:
        j = int(self.grid.locate(q, p))
        if j < 0:
            raise GridError(f"point ({q}, {p}) lies outside the phase-space box")
        return j

    def check_cell(self, cell) -> int:
        j = int(cell)
        if not 0 <= j < self.D:
            raise IndexError(f"cell index {cell} out of range for D={self.D}")
        return j

    def metadata(self) -> dict:
        meta = {"basis": self.kind, "D": self.D}
        meta.update(self.grid.metadata())
        return meta


@dataclass(frozen=True)
class MacroscopicOps:
    Qhat: np.ndarray
    Phat: np.ndarray


def _cell_sampling(n_points: int, n_cells: int, per_cell: int, axis: str) -> int:
    if n_points % n_cells:
        raise GridError(f"{n_points} {axis} grid points are not divisible by {n_cells} cells")
    n_s = n_points // n_cells
    if n_s != per_cell:
        raise GridError(
            f"each cell holds {n_s} {axis} samples but the conjugate axis has {per_cell} cells; "
            f"a complete basis needs {n_cells * per_cell} points")
    return n_s


def position_samples(grid: PhaseSpaceGrid, n_points: int, offset: float = 0.5) -> np.ndarray:
    dx = grid.q_extent / n_points
    return grid.q_origin + (np.arange(n_points) + offset) * dx


def momentum_samples(grid: PhaseSpaceGrid, n_points: int, offset: float = 0.5) -> np.ndarray:
    dk = grid.p_extent / n_points
    return grid.p_origin + (np.arange(n_points) + offset) * dk


def build_position_slice_basis(grid: PhaseSpaceGrid, q_grid_points: int,
                               sample_offset: float = 0.5) -> PlanckBasis:
    """Cells as position windows carrying a plane-wave phase ``exp(i P q / hbar)``.

    The computational basis is the uniform position grid
    ``q_k = q_origin + (k + sample_offset) dx``; every cell holds ``L_p``
    consecutive samples, so ``q_grid_points`` must equal ``L_q * L_p``.
    Orthogonality inside a cell is the discrete Fourier identity and holds
    exactly.
    """
    n_s = _cell_sampling(q_grid_points, grid.L_q, grid.L_p, "position")
    q = position_samples(grid, q_grid_points, sample_offset)
    coords = grid.cell_coords()
    frame = np.zeros((q_grid_points, grid.D), dtype=complex)
    norm = 1.0 / math.sqrt(n_s)
    for j, (Q, P) in enumerate(coords):
        m = j // grid.L_p
        sl = slice(m * n_s, (m + 1) * n_s)
        frame[sl, j] = norm * np.exp(1j * P * q[sl] / grid.hbar)
    return PlanckBasis(grid=grid, frame=frame, kind=POSITION_SLICE, cell_coords=coords, samples=q)


def build_momentum_slice_basis(grid: PhaseSpaceGrid, p_grid_points: int,
                               sample_offset: float = 0.5) -> PlanckBasis:
    """Cells as momentum windows with phase ``exp(-i Q p / hbar)``.

    The computational basis is the momentum grid
    ``p_j = p_origin + (j + sample_offset) dk``.
    """
    n_s = _cell_sampling(p_grid_points, grid.L_p, grid.L_q, "momentum")
    p = momentum_samples(grid, p_grid_points, sample_offset)
    coords = grid.cell_coords()
    frame = np.zeros((p_grid_points, grid.D), dtype=complex)
    norm = 1.0 / math.sqrt(n_s)
    for j, (Q, P) in enumerate(coords):
        n = j % grid.L_p
        sl = slice(n * n_s, (n + 1) * n_s)
        frame[sl, j] = norm * np.exp(-1j * Q * p[sl] / grid.hbar)
    return PlanckBasis(grid=grid, frame=frame, kind=MOMENTUM_SLICE, cell_coords=coords, samples=p)


def fourier_matrix(q: np.ndarray, p: np.ndarray, hbar: float) -> np.ndarray:
    """``<q_k | p_j> = exp(i p_j q_k / hbar) / sqrt(M)``.

    Unitary when the grids are conjugate, i.e. ``dq * dp * M = 2 pi hbar``.
    """
    return np.exp(1j * np.outer(q, p) / hbar) / math.sqrt(len(q))


def fock_grid(N: int, L: int, q_origin: float = 0.0) -> PhaseSpaceGrid:
    dp = L / N
    return PhaseSpaceGrid(q_origin=q_origin, p_origin=-L * dp / 2, q_extent=2 * math.pi,
                          p_extent=L * dp, L_q=L, L_p=L, hbar=1.0 / N, periodic_q=True)


def fock_side(N: int) -> int:
    """``L`` with ``N + 1 = L**2`` and ``L`` odd; raises otherwise."""
    if N < 1:
        raise GridError(f"N = {N}: a Fock basis needs at least one particle")
    D = N + 1
    L = math.isqrt(D)
    if L * L != D or L % 2 == 0:
        raise GridError(f"N + 1 = {D} is not the square of an odd integer (try N = L**2 - 1)")
    return L


def build_discrete_fock_basis(N: int, L: int | None = None, q_origin: float = 0.0) -> PlanckBasis:
    """Planck cells for a two-mode boson system with ``N`` particles.

    The computational basis is the Fock basis ``|s, N - s>``, ``s = 0..N``,
    which diagonalizes ``p = (N - 2s) / (2N) = n / N`` with ``n = N/2 - s``.
    Cell ``(Q, P)`` with ``P = L n2 / N`` is

        (1/sqrt(L)) sum_{n = P N - m}^{P N + m} exp(-i Q n) |p = n / N>

    where ``L = 2m + 1`` and ``N + 1 = L**2``. With the default
    ``q_origin = 0`` the Q lattice is ``(n1 + 1/2) 2 pi / L``, which puts a
    cell center exactly on ``Q = pi`` (the LMG saddle); ``q_origin = -pi/L``
    gives the unshifted lattice ``2 pi n1 / L``.
    """
    L_check = fock_side(N)
    if L is not None and L != L_check:
        raise GridError(f"L = {L} inconsistent with N = {N} (expected {L_check})")
    L = L_check
    m = (L - 1) // 2
    grid = fock_grid(N, L, q_origin)
    coords = grid.cell_coords()
    frame = np.zeros((N + 1, grid.D), dtype=complex)
    norm = 1.0 / math.sqrt(L)
    for j, (Q, P) in enumerate(coords):
        n2 = j % L - m
        ns = np.arange(L * n2 - m, L * n2 + m + 1)
        rows = N // 2 - ns
        frame[rows, j] = norm * np.exp(-1j * Q * ns)
    s = np.arange(N + 1)
    return PlanckBasis(grid=grid, frame=frame, kind=DISCRETE_FOCK, cell_coords=coords,
                       samples=(N - 2 * s) / (2 * N))


def macroscopic_operators(basis: PlanckBasis) -> MacroscopicOps:
    """``Qhat = sum_x |x> Q_x <x|`` and ``Phat`` likewise."""
    F = basis.frame
    Qhat = (F * basis.Q) @ dagger(F)
    Phat = (F * basis.P) @ dagger(F)
    return MacroscopicOps(Qhat=(Qhat + dagger(Qhat)) / 2, Phat=(Phat + dagger(Phat)) / 2)


def cell_amplitudes(state: np.ndarray, basis: PlanckBasis) -> np.ndarray:
    state = np.asarray(state)
    if state.shape[0] != basis.frame.shape[0]:
        raise ValueError(f"state dimension {state.shape[0]} != basis dimension {basis.frame.shape[0]}")
    return dagger(basis.frame) @ state


def frame_residual(basis: PlanckBasis) -> float:
    F = basis.frame
    return float(np.abs(dagger(F) @ F - np.eye(F.shape[1])).max())


def check_orthonormal(basis: PlanckBasis, tol: float = ALGEBRA_TOL) -> None:
    res = frame_residual(basis)
    if res > tol:
        raise GridError(f"basis frame is not orthonormal (residual {res:.3e})")
