"""Classical limits of the three models and the coarse-grained cell map."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import dagger
from .planck import PhaseSpaceGrid, PlanckBasis

TWO_PI = 2 * math.pi
PHASE_FLOOR = 1e-14
STATIONARY_TOL = 1e-8


class FlowDomainError(ValueError):
    """Trajectory left the domain where the Hamiltonian is defined."""


class ClassicalSystem:
    """One-degree-of-freedom Hamiltonian system.

    Subclasses provide ``hamiltonian`` and ``gradient`` (``dH/dq, dH/dp``).
    Maps (``discrete = True``) advance in whole kicks instead.
    """

    kind = "abstract"
    discrete = False

    def hamiltonian(self, q, p):
        raise NotImplementedError

    def gradient(self, q, p):
        raise NotImplementedError

    def vector_field(self, q, p):
        dHq, dHp = self.gradient(q, p)
        return dHp, -dHq

    def in_domain(self, q, p):
        return np.isfinite(q) & np.isfinite(p)

    def check_domain(self, q, p) -> None:
        if not np.all(self.in_domain(q, p)):
            raise FlowDomainError(f"{self.kind} trajectory left the domain of the Hamiltonian")

    def parameters(self) -> dict:
        return {}

    def metadata(self) -> dict:
        return {"system": self.kind, **self.parameters()}


@dataclass(frozen=True)
class StandardMap(ClassicalSystem):
    K: float

    kind = "standard_map"
    discrete = True

    def parameters(self) -> dict:
        return {"K": self.K}

    def step(self, q, p):
        return standard_map_step(q, p, self.K)


@dataclass(frozen=True)
class LmgMeanField(ClassicalSystem):
    """``H(q, p) = sqrt(1/4 - p^2) cos q + 2 xi p^2`` with ``|p| < 1/2``."""

    xi: float = -2.0

    kind = "lmg_mean_field"

    def parameters(self) -> dict:
        return {"xi": self.xi}

    def hamiltonian(self, q, p):
        return np.sqrt(0.25 - p**2) * np.cos(q) + 2 * self.xi * p**2

    def gradient(self, q, p):
        r = np.sqrt(0.25 - p**2)
        return -r * np.sin(q), -p * np.cos(q) / r + 4 * self.xi * p

    def in_domain(self, q, p):
        with np.errstate(invalid="ignore"):
            return np.isfinite(q) & (np.abs(p) < 0.5)

    def check_domain(self, q, p) -> None:
        if not np.all(self.in_domain(q, p)):
            raise FlowDomainError("LMG trajectory reached |p| = 1/2 (coordinate singularity)")


@dataclass(frozen=True)
class InvertedOscillator(ClassicalSystem):
    """``H = (p^2 - q^2) / 2``, optionally confined by reflecting walls.

    The flow is hyperbolic and solved in closed form, so it does not use the
    Runge-Kutta integrator; wall hits reverse ``p``.
    """

    wall: tuple | None = (-0.5, 0.5)

    kind = "inverted_oscillator"

    def parameters(self) -> dict:
        return {"wall": list(self.wall) if self.wall else None}

    def hamiltonian(self, q, p):
        return 0.5 * (p**2 - q**2)

    def gradient(self, q, p):
        return -np.asarray(q, dtype=float), np.asarray(p, dtype=float)

    def exact(self, q, p, t):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        if self.wall is None:
            c, s = math.cosh(t), math.sinh(t)
            return q * c + p * s, q * s + p * c
        shape = np.broadcast(q, p).shape
        qq, pp = np.broadcast_to(q, shape).ravel().copy(), np.broadcast_to(p, shape).ravel().copy()
        for i in range(qq.size):
            qq[i], pp[i] = self._walled(qq[i], pp[i], t)
        return qq.reshape(shape), pp.reshape(shape)

    def _walled(self, q, p, t):
        lo, hi = self.wall
        sign = 1.0 if t >= 0 else -1.0
        # run backwards by flipping momentum, which is the time reversal of this H
        p = sign * p
        remaining = abs(t)
        for _ in range(100000):
            hit = self._time_to_wall(q, p, lo, hi)
            if hit is None or hit >= remaining:
                c, s = math.cosh(remaining), math.sinh(remaining)
                q, p = q * c + p * s, q * s + p * c
                break
            c, s = math.cosh(hit), math.sinh(hit)
            q, p = q * c + p * s, q * s + p * c
            q = min(max(q, lo), hi)
            p = -p
            remaining -= hit
        return q, sign * p

    @staticmethod
    def _time_to_wall(q, p, lo, hi):
        # q(t) = A e^t + B e^-t; solve A x^2 - w x + B = 0 for x = e^t > 1
        A, B = (q + p) / 2, (q - p) / 2
        best = None
        for w, outward in ((lo, -1.0), (hi, 1.0)):
            if A == 0:
                roots = [B / w] if w != 0 else []
            else:
                disc = w * w - 4 * A * B
                if disc < 0:
                    continue
                # cancellation-free roots; a tiny A sends one root to infinity (never hit)
                half = (w + math.copysign(math.sqrt(disc), w)) / 2
                roots = [half / A if abs(A) * 1e300 > abs(half) else math.inf,
                         B / half if half != 0 else math.inf]
            for x in roots:
                if not math.isfinite(x):
                    continue
                # only crossings made while moving into the wall count
                if x > 1 + 1e-12 and outward * (A * x - B / x) > 0:
                    tau = math.log(x)
                    if best is None or tau < best:
                        best = tau
        return best


@dataclass(frozen=True)
class HarmonicOscillator(ClassicalSystem):
    """``H = (p^2 + q^2) / 2``: a stable centre, used as a contrast case."""

    kind = "harmonic_oscillator"

    def hamiltonian(self, q, p):
        return 0.5 * (p**2 + q**2)

    def gradient(self, q, p):
        return np.asarray(q, dtype=float), np.asarray(p, dtype=float)


def standard_map_step(q, p, K):
    """Kick then rotate: ``p' = p + K sin q``, ``q' = q + p'``, both mod 2 pi."""
    p = np.mod(p + K * np.sin(q), TWO_PI)
    q = np.mod(q + p, TWO_PI)
    return q, p


def _rk4(system: ClassicalSystem, q, p, h: float, n: int, strict: bool = True):
    f = system.vector_field
    live = np.ones(np.broadcast(q, p).shape, dtype=bool)
    if strict:
        system.check_domain(q, p)
    else:
        live &= system.in_domain(q, p)
    for _ in range(n):
        with np.errstate(invalid="ignore"):
            k1q, k1p = f(q, p)
            k2q, k2p = f(q + 0.5 * h * k1q, p + 0.5 * h * k1p)
            k3q, k3p = f(q + 0.5 * h * k2q, p + 0.5 * h * k2p)
            k4q, k4p = f(q + h * k3q, p + h * k3p)
            q_new = q + h / 6 * (k1q + 2 * k2q + 2 * k3q + k4q)
            p_new = p + h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
        ok = system.in_domain(q_new, p_new)
        if strict and not np.all(ok):
            system.check_domain(q_new, p_new)
        # escaped points stay at their last valid state
        live &= ok
        q, p = np.where(live, q_new, q), np.where(live, p_new, p)
    return q, p, ~live


def flow(system: ClassicalSystem, state, t: float, dt: float = 1e-3, strict: bool = True):
    """Advance ``(q, p)`` (scalars or arrays) by time ``t``.

    Continuous systems use fixed-step RK4 with the step shrunk slightly so
    the last step lands exactly on ``t``; negative ``t`` runs backwards.
    For maps ``t`` counts kicks and must be a non-negative integer.

    With ``strict=False`` points that leave the domain are frozen at their
    last valid state and ``(q, p, escaped)`` is returned instead.

    Raises
    ------
    FlowDomainError
        If an LMG trajectory reaches ``|p| = 1/2`` (strict mode).
    """
    q, p = (np.asarray(x, dtype=float) for x in state)
    escaped = np.zeros(np.broadcast(q, p).shape, dtype=bool)
    if system.discrete:
        n = int(round(t))
        if n < 0 or abs(n - t) > 1e-12:
            raise ValueError("maps advance by a non-negative integer number of kicks")
        for _ in range(n):
            q, p = system.step(q, p)
        return (q, p) if strict else (q, p, escaped)
    if dt <= 0:
        raise ValueError("dt must be positive")
    if isinstance(system, InvertedOscillator):
        q, p = system.exact(q, p, t)
        return (q, p) if strict else (q, p, escaped)
    if t == 0:
        if strict:
            system.check_domain(q, p)
            return q.copy(), p.copy()
        return q.copy(), p.copy(), ~system.in_domain(q, p)
    n = max(1, math.ceil(abs(t) / dt - 1e-9))
    q, p, escaped = _rk4(system, q, p, t / n, n, strict)
    return (q, p) if strict else (q, p, escaped)


def trajectory(system: ClassicalSystem, state, times, dt: float = 1e-3) -> np.ndarray:
    """``(len(times), 2)`` samples of one orbit at increasing ``times``."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    out = np.empty((len(times), 2))
    q, p = float(state[0]), float(state[1])
    prev = 0.0
    for i, t in enumerate(times):
        if t != prev:
            q, p = flow(system, (q, p), t - prev, dt)
            q, p = float(q), float(p)
        out[i] = q, p
        prev = t
    return out


@dataclass(frozen=True)
class SectionCloud:
    points: np.ndarray
    seed: int | None
    n_samples: int
    n_iterations: int
    system: dict = field(default_factory=dict)

    def normalized(self, scale: float = TWO_PI) -> np.ndarray:
        return self.points / scale

    def metadata(self) -> dict:
        return {"seed": self.seed, "n_samples": self.n_samples,
                "n_iterations": self.n_iterations, **self.system}


def poincare_section(system: ClassicalSystem, n_samples: int, n_iterations: int, seed: int | None = 0,
                     initial=None, spread: float = 0.0, period: float = 1.0,
                     box=((0.0, TWO_PI), (0.0, TWO_PI)), dt: float = 1e-3) -> SectionCloud:
    """Stroboscopic point cloud from ``n_samples`` starting points.

    Starts are uniform in ``box`` unless ``initial`` is given, in which case
    they are Gaussian around it with width ``spread`` (``spread = 0`` repeats
    the single orbit). Row order is iteration-major, starting points first.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    if n_iterations < 0:
        raise ValueError("n_iterations must be non-negative")
    rng = np.random.default_rng(seed)
    if initial is None:
        (q0, q1), (p0, p1) = box
        q = rng.uniform(q0, q1, n_samples)
        p = rng.uniform(p0, p1, n_samples)
    else:
        q = float(initial[0]) + spread * rng.standard_normal(n_samples)
        p = float(initial[1]) + spread * rng.standard_normal(n_samples)
        if system.discrete:
            q, p = np.mod(q, TWO_PI), np.mod(p, TWO_PI)
    pts = np.empty((n_iterations + 1, n_samples, 2))
    pts[0, :, 0], pts[0, :, 1] = q, p
    for k in range(1, n_iterations + 1):
        q, p = flow(system, (q, p), 1 if system.discrete else period, dt)
        pts[k, :, 0], pts[k, :, 1] = q, p
    return SectionCloud(points=pts.reshape(-1, 2), seed=seed, n_samples=n_samples,
                        n_iterations=n_iterations, system=system.metadata())


@dataclass(frozen=True)
class CoarseMap:
    """Cell-to-cell classical transport ``x -> g_c x`` after time ``t``.

    ``phase[x]`` is the phase of ``<g_c x|U(t)|x>`` and ``magnitude[x]`` its
    modulus; ``flagged`` marks cells where the phase is undefined (vanishing
    overlap), whose image left a non-periodic box, or whose trajectory
    left the system's domain (frozen at its last valid point).
    """

    t: float
    target: np.ndarray
    phase: np.ndarray
    magnitude: np.ndarray
    flagged: np.ndarray

    @property
    def collisions(self) -> int:
        """Cells sharing an image with another cell (``D - #distinct images``)."""
        return int(self.target.size - np.unique(self.target).size)

    @property
    def is_permutation(self) -> bool:
        return self.collisions == 0


def cell_frame(U: np.ndarray, basis: PlanckBasis) -> np.ndarray:
    """Matrix elements ``<x'|U|x>`` between Planck cells."""
    F = basis.frame
    return dagger(F) @ U @ F


def coarse_map(system: ClassicalSystem, grid: PhaseSpaceGrid, t: float,
               U_t: np.ndarray | None = None, basis: PlanckBasis | None = None,
               dt: float = 1e-3, U_cells: np.ndarray | None = None) -> CoarseMap:
    """Transport every cell center by the classical flow and read the phase.

    Either ``U_t`` with ``basis`` or the cell-frame matrix ``U_cells`` may be
    supplied; without either the phases are all 1 and magnitudes NaN.
    """
    coords = grid.cell_coords()
    if t == 0:
        q, p = coords[:, 0], coords[:, 1]
        escaped = np.zeros(grid.D, dtype=bool)
    else:
        q, p, escaped = flow(system, (coords[:, 0], coords[:, 1]), t, dt, strict=False)
    raw = grid.locate(q, p)
    outside = (raw < 0) | escaped
    target = np.where(outside, grid.locate(q, p, clip=True), raw)
    D = grid.D
    if U_cells is None and U_t is not None:
        if basis is None:
            raise ValueError("U_t needs the basis it is expressed against")
        if U_t.shape[0] != basis.frame.shape[0] or basis.D != D:
            raise ValueError("propagator, basis and grid dimensions disagree")
        U_cells = cell_frame(U_t, basis)
    if U_cells is None:
        return CoarseMap(t=t, target=target, phase=np.ones(D, dtype=complex),
                         magnitude=np.full(D, np.nan), flagged=outside)
    if U_cells.shape != (D, D):
        raise ValueError("cell-frame propagator does not match the grid")
    amp = U_cells[target, np.arange(D)]
    mag = np.abs(amp)
    weak = mag < PHASE_FLOOR
    phase = np.where(weak, 1.0 + 0j, amp / np.where(weak, 1.0, mag))
    if t == 0:
        # U(0) = I: take the phase as exactly 1
        phase = np.ones(D, dtype=complex)
    return CoarseMap(t=t, target=target, phase=phase, magnitude=mag, flagged=outside | weak)


def hessian(system: ClassicalSystem, point, h: float = 1e-5) -> np.ndarray:
    """Central differences of the analytic gradient, symmetrized."""
    q, p = float(point[0]), float(point[1])
    gqp = np.array(system.gradient(q + h, p), dtype=float)
    gqm = np.array(system.gradient(q - h, p), dtype=float)
    gpp = np.array(system.gradient(q, p + h), dtype=float)
    gpm = np.array(system.gradient(q, p - h), dtype=float)
    d_dq = (gqp - gqm) / (2 * h)
    d_dp = (gpp - gpm) / (2 * h)
    Hqq, Hpp = d_dq[0], d_dp[1]
    Hqp = 0.5 * (d_dq[1] + d_dp[0])
    return np.array([[Hqq, Hqp], [Hqp, Hpp]])


def saddle_lyapunov(system: ClassicalSystem, point, h: float = 1e-5) -> float:
    """Largest real part of the linearized flow's eigenvalues at a fixed point."""
    g = np.array(system.gradient(float(point[0]), float(point[1])), dtype=float)
    if np.linalg.norm(g) > STATIONARY_TOL:
        raise ValueError(f"point {tuple(point)} is not stationary (|grad H| = {np.linalg.norm(g):.2e})")
    (Hqq, Hqp), (_, Hpp) = hessian(system, point, h)
    J = np.array([[Hqp, Hpp], [-Hqq, -Hqp]])
    return float(np.max(np.linalg.eigvals(J).real))
