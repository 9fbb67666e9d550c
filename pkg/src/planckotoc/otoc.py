"""Planck-cell OTOC ``C(t, x) = <x| (i[A(t), B])^2 |x>`` and related quantities.

Operators are evolved once in the Heisenberg picture and read out for every
cell, instead of evolving one state per cell. Two evolution sources exist:

* a one-period Floquet matrix, iterated (:class:`FloquetTrack`);
* a :class:`~planckotoc.numerics.SpectralPropagator`, evaluated at arbitrary
  times (:class:`SpectralTrack`).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .classical import CoarseMap, cell_frame
from .numerics import SpectralPropagator, _square, dagger, hermitian_residual
from .planck import PlanckBasis, PhaseSpaceGrid, macroscopic_operators

log = logging.getLogger(__name__)

# budget for keeping Floquet-track matrices in memory
CACHE_BYTES = 256 * 2**20


# -- Heisenberg tracks ------------------------------------------------------------

class HeisenbergTrack:
    """Sampled ``A(t) = U(t)^dagger A U(t)``.

    Iterating yields ``(t, A(t))``. ``apply(i, v)`` returns ``A(t_i) @ v``
    and is cheaper than materializing the matrix for spectral tracks.
    """

    label: str
    times: np.ndarray
    A: np.ndarray

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self):
        for i, t in enumerate(self.times):
            yield t, self.at(i)

    def at(self, i: int) -> np.ndarray:
        raise NotImplementedError

    def apply(self, i: int, v: np.ndarray) -> np.ndarray:
        return self.at(i) @ v

    def matrices(self) -> list:
        return [A for _, A in self]

    @property
    def dim(self) -> int:
        return self.A.shape[0]


class FloquetTrack(HeisenbergTrack):
    """``A(k) = U^{dagger k} A U^k`` at ``k = 0, stride, 2 stride, ...``.

    Each step is re-symmetrized to ``(A + A^dagger)/2``; the largest
    pre-symmetrization residual is kept in ``drift``. Matrices are cached
    when they fit in ``CACHE_BYTES`` (or as ``keep`` dictates), otherwise
    every pass recomputes the iteration.
    """

    def __init__(self, U_step: np.ndarray, A: np.ndarray, n_steps: int, stride: int = 1,
                 label: str = "A", keep: bool | None = None):
        U_step, A = _square(U_step, "U_step"), _square(A, "A")
        if U_step.shape != A.shape:
            raise ValueError(f"U_step {U_step.shape} and A {A.shape} differ")
        if n_steps < 0 or stride < 1:
            raise ValueError("n_steps must be >= 0 and stride >= 1")
        self.U = np.asarray(U_step, dtype=complex)
        self._Uh = dagger(self.U)
        self.A = np.asarray(A, dtype=complex)
        self.label = label
        self.n_steps = int(n_steps)
        self.stride = int(stride)
        self.steps = np.arange(0, self.n_steps + 1, self.stride)
        self.times = self.steps.astype(float)
        if keep is None:
            keep = len(self.steps) * self.A.nbytes <= CACHE_BYTES
        self.keep = keep
        self._cache: list | None = None
        self.drift = 0.0

    def _run(self):
        A = self.A.copy()
        drift = 0.0
        k = 0
        for i, target in enumerate(self.steps):
            while k < target:
                A = self._Uh @ A @ self.U
                drift = max(drift, hermitian_residual(A))
                A = (A + dagger(A)) / 2
                k += 1
            yield A
        self.drift = max(self.drift, drift)
        if drift > 1e-10:
            log.warning("Heisenberg track %s: hermiticity drift %.2e", self.label, drift)
        else:
            log.debug("Heisenberg track %s: hermiticity drift %.2e", self.label, drift)

    def __iter__(self):
        if self._cache is not None:
            yield from zip(self.times, self._cache)
            return
        stored = [] if self.keep else None
        for t, A in zip(self.times, self._run()):
            if stored is not None:
                stored.append(A)
            yield t, A
        if stored is not None and len(stored) == len(self.steps):
            self._cache = stored

    def at(self, i: int) -> np.ndarray:
        if self._cache is not None:
            return self._cache[i]
        for j, (_, A) in enumerate(self):
            if j == i:
                return A
        raise IndexError(i)


class SpectralTrack(HeisenbergTrack):
    """``A(t)`` from an eigendecomposed Hamiltonian, any sample times."""

    def __init__(self, propagator: SpectralPropagator, A: np.ndarray, times, label: str = "A"):
        A = _square(A, "A")
        if A.shape[0] != propagator.dim:
            raise ValueError("operator and propagator dimensions differ")
        times = np.asarray(times, dtype=float)
        if times.ndim != 1 or np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        self.prop = propagator
        self.A = A
        self.A_eig = propagator.to_eigenframe(A)
        self.label = label
        self.times = times
        self.drift = 0.0

    def eigenframe_at(self, i: int) -> np.ndarray:
        ph = self.prop._phases(self.times[i])
        return (ph.conj()[:, None] * self.A_eig) * ph[None, :]

    def at(self, i: int) -> np.ndarray:
        if self.times[i] == 0:
            return np.asarray(self.A, dtype=complex)
        At = self.prop.heisenberg_from_eigenframe(self.A_eig, self.times[i])
        return (At + dagger(At)) / 2

    def apply(self, i: int, v: np.ndarray) -> np.ndarray:
        if self.times[i] == 0:
            return self.A @ v
        p = self.prop
        ph = p._phases(self.times[i])
        c = p._Vh @ v
        c = (ph if c.ndim == 1 else ph[:, None]) * c
        c = self.A_eig @ c
        c = (ph.conj() if c.ndim == 1 else ph.conj()[:, None]) * c
        return p._V @ c


def heisenberg_track(U_step: np.ndarray, A: np.ndarray, n_steps: int, stride: int = 1,
                     label: str = "A", keep: bool | None = None) -> FloquetTrack:
    return FloquetTrack(U_step, A, n_steps, stride, label=label, keep=keep)


def spectral_track(propagator: SpectralPropagator, A: np.ndarray, times, label: str = "A") -> SpectralTrack:
    return SpectralTrack(propagator, A, times, label=label)


# -- OTOC records ----------------------------------------------------------------------

@dataclass
class OtocRecord:
    label: str
    times: np.ndarray
    values: np.ndarray
    pair: tuple = ("A", "B")
    metadata: dict = field(default_factory=dict)


def _applied(track: HeisenbergTrack, V: np.ndarray):
    """``A(t_i) @ V`` for each sample, in one pass over the track."""
    if isinstance(track, SpectralTrack):
        for i in range(len(track)):
            yield track.apply(i, V)
    else:
        for _, A in track:
            yield A @ V


def cells_otoc(track: HeisenbergTrack, B: np.ndarray, basis: PlanckBasis, cells,
               pair_label: str | None = None) -> list[OtocRecord]:
    """``C(t, x)`` for several cells from one pass over the track."""
    cells = [basis.check_cell(c) for c in np.atleast_1d(cells)]
    B = _square(B, "B")
    if B.shape[0] != track.dim or basis.frame.shape[0] != track.dim:
        raise ValueError("operator, track and basis dimensions differ")
    X = basis.frame[:, cells]
    BX = B @ X
    vals = np.empty((len(track), len(cells)))
    for i, both in enumerate(_applied(track, np.concatenate([X, BX], axis=1))):
        AX, ABX = both[:, :len(cells)], both[:, len(cells):]
        K = ABX - B @ AX
        vals[i] = np.einsum("ij,ij->j", K.conj(), K).real
    pair = (track.label, pair_label or "B")
    return [OtocRecord(label=str(c), times=np.array(track.times), values=vals[:, k].copy(), pair=pair)
            for k, c in enumerate(cells)]


def cell_otoc(track: HeisenbergTrack, B: np.ndarray, basis: PlanckBasis, cell,
              pair_label: str | None = None) -> OtocRecord:
    """``C(t, x) = || (A(t) B - B A(t)) |x> ||^2`` at the sampled times."""
    return cells_otoc(track, B, basis, [cell], pair_label)[0]


def thermal_otoc(track: HeisenbergTrack, B: np.ndarray, weight=None, pair_label: str | None = None,
                 label: str | None = None) -> OtocRecord:
    """Thermal OTOC ``Tr(rho (i[A(t), B])^2)``.

    ``weight=None`` is the infinite-temperature state ``I/D``. A 2-D array
    is a density matrix in the computational frame. A 1-D array is a set of
    populations diagonal in the eigenframe of a :class:`SpectralTrack`
    (e.g. Gibbs weights), which avoids the frame changes.
    """
    B = _square(B, "B")
    D = track.dim
    if B.shape[0] != D:
        raise ValueError("operator and track dimensions differ")
    vals = np.empty(len(track))
    if weight is not None and np.ndim(weight) == 1:
        if not isinstance(track, SpectralTrack):
            raise ValueError("population weights need a spectral track")
        w = np.asarray(weight, dtype=float)
        if w.shape != (D,):
            raise ValueError("weight length does not match the dimension")
        B_eig = track.prop.to_eigenframe(B)
        for i in range(len(track)):
            Ae = track.eigenframe_at(i)
            K = Ae @ B_eig - B_eig @ Ae
            vals[i] = float(np.einsum("ab,ab,b->", K.conj(), K, w).real)
        name = label or "thermal:gibbs"
    else:
        rho = None
        if weight is not None:
            rho = _square(weight, "rho")
            if rho.shape[0] != D:
                raise ValueError("density matrix and track dimensions differ")
            if abs(np.trace(rho) - 1) > 1e-8:
                raise ValueError("density matrix must have unit trace")
        for i, (_, A) in enumerate(track):
            K = A @ B - B @ A
            if rho is None:
                vals[i] = float(np.einsum("ij,ij->", K.conj(), K).real) / D
            else:
                vals[i] = float(np.einsum("ij,ij->", K.conj(), K @ rho).real)
        name = label or ("thermal:inf" if rho is None else "thermal:rho")
    return OtocRecord(label=name, times=np.array(track.times), values=vals,
                      pair=(track.label, pair_label or "B"))


# -- all-cell sweeps ----------------------------------------------------------------

def _diagonal_values(B_cells: np.ndarray, tol: float = 1e-12):
    d = np.diag(B_cells)
    off = B_cells - np.diag(d)
    scale = max(1.0, float(np.abs(d).max()) if d.size else 1.0)
    if np.abs(off).max() <= tol * scale:
        return d.real
    return None


def section_readout(A_cells: np.ndarray, B_cells: np.ndarray) -> np.ndarray:
    """``C(x)`` for every cell from operators already in the cell frame.

    When ``B`` is diagonal in that frame, ``C_x = sum_z |A_zx|^2 (b_x - b_z)^2``
    costs O(D^2); otherwise the commutator is formed explicitly.
    """
    b = _diagonal_values(B_cells)
    if b is not None:
        W = A_cells.real**2 + A_cells.imag**2
        gap = b[None, :] - b[:, None]
        return np.einsum("zx,zx->x", W, gap * gap)
    K = A_cells @ B_cells - B_cells @ A_cells
    return np.einsum("ij,ij->j", K.conj(), K).real


@dataclass
class OtocSweep:
    """``values[i, x] = C(times[i], x)`` for all cells, plus the cell average."""

    times: np.ndarray
    values: np.ndarray
    pair: tuple
    drift: float = 0.0

    @property
    def thermal(self) -> np.ndarray:
        return self.values.mean(axis=1)

    def record(self, cell: int) -> OtocRecord:
        return OtocRecord(label=str(cell), times=self.times, values=self.values[:, cell].copy(),
                          pair=self.pair)


def otoc_sweep(U_step: np.ndarray, basis: PlanckBasis, n_steps: int, A: np.ndarray, B: np.ndarray,
               stride: int = 1, pair=("A", "B")) -> OtocSweep:
    """Every cell's OTOC after each ``stride`` Floquet steps.

    Evolution runs in the cell frame so the readout needs no frame change.
    """
    F = basis.frame
    U_cells = dagger(F) @ U_step @ F
    A_cells = dagger(F) @ A @ F
    B_cells = dagger(F) @ B @ F
    track = FloquetTrack(U_cells, (A_cells + dagger(A_cells)) / 2, n_steps, stride,
                         label=pair[0], keep=False)
    rows = [section_readout(At, B_cells) for _, At in track]
    return OtocSweep(times=track.times, values=np.array(rows), pair=tuple(pair), drift=track.drift)


def spectral_sweep(propagator: SpectralPropagator, basis: PlanckBasis, times, A: np.ndarray,
                   B: np.ndarray, pair=("A", "B")) -> OtocSweep:
    track = SpectralTrack(propagator, A, times, label=pair[0])
    F = basis.frame
    B_cells = dagger(F) @ B @ F
    rows = []
    for _, At in track:
        rows.append(section_readout(dagger(F) @ At @ F, B_cells))
    return OtocSweep(times=track.times, values=np.array(rows), pair=tuple(pair))


@dataclass
class SectionImage:
    grid: PhaseSpaceGrid
    values: np.ndarray
    t_final: float
    pair: tuple

    def as_grid(self) -> np.ndarray:
        """``(L_q, L_p)`` array indexed ``[m, n]``."""
        return self.values.reshape(self.grid.L_q, self.grid.L_p)


def operator_set(basis: PlanckBasis, q: np.ndarray | None = None, p: np.ndarray | None = None) -> dict:
    """Named operators for pair labels: ``Q``, ``P`` and optionally ``q``, ``p``."""
    ops = macroscopic_operators(basis)
    out = {"Q": ops.Qhat, "P": ops.Phat}
    if q is not None:
        out["q"] = q
    if p is not None:
        out["p"] = p
    return out


def quantum_section(U_step: np.ndarray, basis: PlanckBasis, n_steps: int, pair=("Q", "P"),
                    operators: dict | None = None) -> SectionImage:
    """``C(n_steps, x)`` for every cell from a single Heisenberg track."""
    ops = operators or operator_set(basis)
    A, B = ops[pair[0]], ops[pair[1]]
    sweep = otoc_sweep(U_step, basis, n_steps, A, B, stride=max(n_steps, 1), pair=pair)
    return SectionImage(grid=basis.grid, values=sweep.values[-1], t_final=float(n_steps), pair=tuple(pair))


def section_series(U_step: np.ndarray, basis: PlanckBasis, n_steps: int, pair=("Q", "P"),
                   operators: dict | None = None, stride: int = 1) -> OtocSweep:
    ops = operators or operator_set(basis)
    return otoc_sweep(U_step, basis, n_steps, ops[pair[0]], ops[pair[1]], stride=stride, pair=pair)


# -- spreading function --------------------------------------------------------------

def spreading_function(U_t: np.ndarray | None, basis: PlanckBasis, gmap: CoarseMap,
                       U_cells: np.ndarray | None = None) -> np.ndarray:
    """``f[x', x] = <x'|U|x> - e^{i phi(x)} delta(x', g_c x)``."""
    if U_cells is None:
        if U_t is None:
            raise ValueError("need U_t or U_cells")
        U_cells = cell_frame(U_t, basis)
    D = basis.D
    if U_cells.shape != (D, D) or gmap.target.shape != (D,):
        raise ValueError("coarse map and propagator do not match the basis")
    f = np.array(U_cells, dtype=complex)
    cols = np.arange(D)
    f[gmap.target, cols] -= gmap.phase
    if gmap.t == 0:
        # U(0) = I and g_c = id exactly
        f[:] = 0
    return f


def split_defect(f: np.ndarray, gmap: CoarseMap) -> float:
    """Largest off-diagonal ``|e^{i phi(x)} f*(g x', x) + e^{-i phi(x')} f(g x, x')|``.

    Unitarity of ``U`` makes this vanish to first order in ``f``; it is
    small only while the coarse map is close to a permutation.
    """
    D = f.shape[1]
    g, ph = gmap.target, gmap.phase
    cols = np.arange(D)
    M = ph[None, :] * np.conj(f[g[:, None], cols[None, :]]) + np.conj(ph)[:, None] * f[g[None, :], cols[:, None]]
    np.fill_diagonal(M, 0)
    return float(np.abs(M).max()) if D > 1 else 0.0


def _displacements(grid: PhaseSpaceGrid, Q, P, Q0, P0, wrap: bool):
    dQ = np.asarray(Q) - Q0
    dP = np.asarray(P) - P0
    if wrap:
        dQ, dP = grid.dq_min_image(dQ), grid.dp_min_image(dP)
    return dQ, dP


@dataclass
class SpreadField:
    cell: int
    t: float
    weights: np.ndarray
    dQ: np.ndarray
    dP: np.ndarray


def spread_field(f: np.ndarray, gmap: CoarseMap, basis: PlanckBasis, cell, wrap: bool = True) -> SpreadField:
    """``|f(g_c z, x)|^2`` over cells ``z`` with displacements ``z - x``."""
    x = basis.check_cell(cell)
    weights = np.abs(f[gmap.target, x]) ** 2
    dQ, dP = _displacements(basis.grid, basis.Q, basis.P, basis.Q[x], basis.P[x], wrap)
    return SpreadField(cell=x, t=gmap.t, weights=weights, dQ=dQ, dP=dP)


def second_order_otoc(f: np.ndarray, gmap: CoarseMap, basis: PlanckBasis, cell, wrap: bool = True) -> float:
    """``sum_z (P_z - P_x)^2 (Q_{g_c z} - Q_{g_c x})^2 |f(g_c z, x)|^2``.

    The sum runs over ``z``, so image cells hit by several ``z`` count
    once per preimage. Torus differences use the minimal image when ``wrap``.
    """
    x = basis.check_cell(cell)
    grid = basis.grid
    g = gmap.target
    _, dP = _displacements(grid, basis.Q, basis.P, basis.Q[x], basis.P[x], wrap)
    dQg, _ = _displacements(grid, basis.Q[g], basis.P[g], basis.Q[g[x]], basis.P[g[x]], wrap)
    weights = np.abs(f[g, x]) ** 2
    return float(np.sum(dP**2 * dQg**2 * weights))


def neighborhood(grid: PhaseSpaceGrid, cell: int, radius: int) -> np.ndarray:
    """Cells within Chebyshev index distance ``radius`` (wrapping periodic axes), self excluded."""
    if radius < 1:
        raise ValueError("radius must be at least one cell")
    m0, n0 = (int(v) for v in grid.mn(cell))
    out = []
    for dm in range(-radius, radius + 1):
        for dn in range(-radius, radius + 1):
            if dm == 0 and dn == 0:
                continue
            m, n = m0 + dm, n0 + dn
            if grid.periodic_q:
                m %= grid.L_q
            if grid.periodic_p:
                n %= grid.L_p
            if 0 <= m < grid.L_q and 0 <= n < grid.L_p:
                out.append(int(grid.index(m, n)))
    return np.unique(out)


def early_time_approx(gmap: CoarseMap, grid: PhaseSpaceGrid, cell, neighborhood_radius: int = 1,
                      wrap: bool = True) -> float:
    """``sum_z (Q_{g_c z} - Q_{g_c x})^2`` over the neighbourhood of ``x``.

    Unnormalized; only its growth rate is meaningful.
    """
    x = int(cell)
    zs = neighborhood(grid, x, neighborhood_radius)
    coords = grid.cell_coords()
    Qg = coords[gmap.target, 0]
    dQ = Qg[zs] - Qg[x]
    if wrap:
        dQ = grid.dq_min_image(dQ)
    return float(np.sum(dQ**2))


# -- state-side diagnostics ------------------------------------------------------------------

def evolve_states(evolution, psi0: np.ndarray, times):
    """Yield ``(t, psi(t))``.

    ``evolution`` is a Floquet matrix (``times`` are kick counts) or a
    :class:`SpectralPropagator` (any times).
    """
    psi0 = np.asarray(psi0, dtype=complex)
    times = np.asarray(times, dtype=float)
    if isinstance(evolution, SpectralPropagator):
        for t in times:
            yield t, (psi0.copy() if t == 0 else evolution.evolve(psi0, t))
        return
    U = np.asarray(evolution)
    steps = np.rint(times).astype(int)
    if np.any(np.abs(steps - times) > 1e-12) or np.any(np.diff(steps) < 0) or (len(steps) and steps[0] < 0):
        raise ValueError("Floquet evolution needs non-decreasing non-negative integer kick counts")
    psi, k = psi0.copy(), 0
    for t, s in zip(times, steps):
        while k < s:
            psi = U @ psi
            k += 1
        yield t, psi


def width_track(evolution, basis: PlanckBasis, cell, times) -> np.ndarray:
    """``W^2(t) = <x|U^dagger (P - P_x)^2 U|x>`` along the momentum axis of cells."""
    x = basis.check_cell(cell)
    P0 = basis.P[x]
    Fh = dagger(basis.frame)
    dP2 = (basis.P - P0) ** 2
    out = []
    for _, psi in evolve_states(evolution, basis.frame[:, x], times):
        amp = Fh @ psi
        out.append(float(np.sum(np.abs(amp) ** 2 * dP2)))
    return np.array(out)
