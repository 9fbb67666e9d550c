"""Wave-packet spreading diagnostics on the Planck-cell lattice."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .classical import ClassicalSystem, trajectory
from .numerics import dagger
from .otoc import evolve_states
from .planck import PlanckBasis

NORM_TOL = 1e-8


@dataclass
class EntropyTrack:
    times: np.ndarray
    values: np.ndarray


@dataclass
class EhrenfestTrack:
    """``delta[i]``: distance between the classical orbit and ``(<Q>, <P>)``.

    ``t_E`` is the first sample where ``delta`` exceeds ``threshold * plateau``
    (NaN if it never does).
    """

    times: np.ndarray
    delta: np.ndarray
    quantum: np.ndarray
    classical: np.ndarray
    plateau: float
    threshold: float
    t_E: float


def cell_populations(state: np.ndarray, basis: PlanckBasis) -> np.ndarray:
    amp = dagger(basis.frame) @ np.asarray(state)
    return amp.real**2 + amp.imag**2


def population_entropy(rho: np.ndarray) -> float:
    """Shannon entropy of a probability vector normalized by ``ln(len)``."""
    rho = np.asarray(rho, dtype=float)
    D = rho.size
    if D <= 1:
        return 0.0
    nz = rho[rho > 0]
    return float(-np.sum(nz * np.log(nz)) / math.log(D))


def gwvn_entropy(state: np.ndarray, basis: PlanckBasis) -> float:
    """Normalized entropy of Planck-cell populations, in ``[0, 1]``.

    Raises ``ValueError`` for a state whose norm differs from 1 by more than
    ``NORM_TOL``.
    """
    state = np.asarray(state)
    if state.shape != (basis.frame.shape[0],):
        raise ValueError("state dimension does not match the basis")
    norm = float(np.linalg.norm(state))
    if abs(norm - 1) > NORM_TOL:
        raise ValueError(f"state is not normalized (norm {norm:.12g})")
    return population_entropy(cell_populations(state, basis))


def entropy_track(evolution, basis: PlanckBasis, cell, times) -> EntropyTrack:
    """Entropy of the evolved cell state ``U(t)|x>``."""
    x = basis.check_cell(cell)
    vals = [gwvn_entropy(psi, basis) for _, psi in evolve_states(evolution, basis.frame[:, x], times)]
    return EntropyTrack(times=np.asarray(times, dtype=float), values=np.array(vals))


def _centroid(rho, values, origin, extent, periodic):
    if not periodic:
        return float(np.einsum("i,i->", rho, values))
    z = np.einsum("i,i->", rho, np.exp(2j * math.pi * (values - origin) / extent))
    return origin + extent * (math.atan2(z.imag, z.real) / (2 * math.pi) % 1.0)


def ehrenfest_delta(evolution, basis: PlanckBasis, cell, classical_start, times,
                    system: ClassicalSystem, dt: float = 1e-3, threshold: float = 5.0) -> EhrenfestTrack:
    """Deviation of the cell's centroid from a classical orbit.

    The quantum centroid is ``(<Qhat(t)>, <Phat(t)>)`` in the evolved cell
    state. On a periodic axis the circular mean (phase of ``<exp(2 pi i
    Qhat / extent)>``) is used, which equals the plain mean for packets away
    from the seam and keeps ``delta`` translation invariant on the torus.
    The classical orbit starts at ``classical_start``; differences use the
    minimal image.
    """
    x = basis.check_cell(cell)
    grid = basis.grid
    q0, p0 = float(classical_start[0]), float(classical_start[1])
    if grid.locate(q0, p0) < 0:
        raise ValueError(f"classical start ({q0}, {p0}) lies outside the phase-space box")
    times = np.asarray(times, dtype=float)
    quantum = np.empty((len(times), 2))
    for i, (_, psi) in enumerate(evolve_states(evolution, basis.frame[:, x], times)):
        rho = cell_populations(psi, basis)
        quantum[i] = (_centroid(rho, basis.Q, grid.q_origin, grid.q_extent, grid.periodic_q),
                      _centroid(rho, basis.P, grid.p_origin, grid.p_extent, grid.periodic_p))
    classical = trajectory(system, (q0, p0), times, dt) if len(times) else np.empty((0, 2))
    dQ = grid.dq_min_image(classical[:, 0] - quantum[:, 0])
    dP = grid.dp_min_image(classical[:, 1] - quantum[:, 1])
    delta = np.hypot(dQ, dP)
    half_diagonal = 0.5 * math.hypot(grid.dq, grid.dp)
    plateau = float(delta[0]) if len(delta) else 0.0
    # a start on the cell centre leaves only rounding noise in delta[0]
    if plateau <= 1e-9 * half_diagonal:
        plateau = half_diagonal
    above = np.nonzero(delta > threshold * plateau)[0]
    t_E = float(times[above[0]]) if above.size else math.nan
    return EhrenfestTrack(times=times, delta=delta, quantum=quantum, classical=classical,
                          plateau=plateau, threshold=threshold, t_E=t_E)
