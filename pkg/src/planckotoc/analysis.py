"""Exponent fits, saturation statistics and classical island/sea masks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .classical import SectionCloud
from .planck import PhaseSpaceGrid

ISLAND, BOUNDARY, SEA = 0, 1, 2
LABEL_NAMES = {ISLAND: "island", BOUNDARY: "boundary", SEA: "sea"}


class FitError(ValueError):
    """Not enough usable samples for a fit."""


@dataclass(frozen=True)
class FitResult:
    exponent: float
    intercept: float
    r_squared: float
    window: tuple
    stderr: float
    n_points: int

    def as_dict(self) -> dict:
        return {"exponent": self.exponent, "intercept": self.intercept, "r_squared": self.r_squared,
                "window": list(self.window), "stderr": self.stderr, "n_points": self.n_points}


def default_window(t_E: float, lo: float = 0.2, hi: float = 0.8) -> tuple:
    return (lo * t_E, hi * t_E)


def fit_exponential(times, values, window=None, min_points: int = 4) -> FitResult:
    """Least squares of ``ln(value)`` against ``t`` inside ``window`` (inclusive).

    Non-positive values are dropped before fitting. ``r_squared`` is 1 for a
    perfect fit, including the flat case.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape:
        raise ValueError("times and values differ in length")
    if window is None:
        window = (float(t.min()), float(t.max())) if t.size else (0.0, 0.0)
    lo, hi = window
    eps = 1e-12 * max(1.0, abs(lo), abs(hi))
    keep = (t >= lo - eps) & (t <= hi + eps) & (v > 0) & np.isfinite(v)
    if keep.sum() < min_points:
        raise FitError(f"{int(keep.sum())} positive samples in window {window}; need {min_points}")
    x, y = t[keep], np.log(v[keep])
    if np.ptp(x) == 0:
        raise FitError("all samples at the same time")
    res = stats.linregress(x, y)
    resid = y - (res.intercept + res.slope * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    # residuals at rounding level count as a perfect fit, flat series included
    floor = (1e-12 * max(1.0, float(np.abs(y).max()))) ** 2 * y.size
    r2 = 1.0 if ss_res <= floor else max(0.0, 1.0 - ss_res / ss_tot)
    return FitResult(exponent=float(res.slope), intercept=float(res.intercept), r_squared=r2,
                     window=(float(lo), float(hi)), stderr=float(res.stderr), n_points=int(keep.sum()))


def saturation_stats(values, tail_fraction: float = 0.3) -> tuple:
    """Mean and standard deviation over the last ``tail_fraction`` of a series."""
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must be in (0, 1]")
    v = np.asarray(values, dtype=float)
    n = int(np.ceil(tail_fraction * v.size))
    if n == 0:
        raise ValueError("empty tail")
    tail = v[-n:]
    return float(tail.mean()), float(tail.std())


@dataclass(frozen=True)
class CellMask:
    grid: PhaseSpaceGrid
    labels: np.ndarray
    hits: np.ndarray
    min_hits: int
    source: dict

    @property
    def island(self) -> np.ndarray:
        return self.labels == ISLAND

    @property
    def sea(self) -> np.ndarray:
        return self.labels == SEA

    @property
    def boundary(self) -> np.ndarray:
        return self.labels == BOUNDARY


def cell_hits(points: np.ndarray, grid: PhaseSpaceGrid) -> np.ndarray:
    hits = np.zeros(grid.D, dtype=int)
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.size:
        idx = grid.locate(pts[:, 0], pts[:, 1])
        np.add.at(hits, idx[idx >= 0], 1)
    return hits


def classify_cells(cloud: SectionCloud, grid: PhaseSpaceGrid, min_hits: int = 10) -> CellMask:
    """Island: never visited; boundary: fewer than ``min_hits`` visits; sea: the rest."""
    if min_hits < 1:
        raise ValueError("min_hits must be at least 1")
    hits = cell_hits(cloud.points, grid)
    labels = np.where(hits == 0, ISLAND, np.where(hits < min_hits, BOUNDARY, SEA))
    return CellMask(grid=grid, labels=labels, hits=hits, min_hits=min_hits, source=cloud.metadata())


def valley_cells(values, grid: PhaseSpaceGrid, rel_threshold: float = 0.3) -> np.ndarray:
    """Cells whose value is below ``rel_threshold`` times the median of their momentum row.

    Comparing within a row removes the ``P``-dependent background of the
    ``(Q, P)`` OTOC, which grows with the spread of ``Q`` across the torus.
    """
    img = np.asarray(values, dtype=float).reshape(grid.L_q, grid.L_p)
    row_median = np.median(img, axis=0)
    return (img < rel_threshold * row_median[None, :]).ravel()


def valley_overlap_score(valleys: np.ndarray, mask: CellMask) -> float:
    """F1 score of valleys against the classical island cells.

    Recall counts islands found among valleys. Precision counts valleys
    lying on island or boundary cells, since chaotic orbits graze island
    edges only rarely.
    """
    valleys = np.asarray(valleys, dtype=bool)
    island = mask.island
    if not island.any() and not valleys.any():
        return 1.0
    recall = (valleys & island).sum() / max(1, island.sum())
    precision = (valleys & (island | mask.boundary)).sum() / max(1, valleys.sum())
    if recall + precision == 0:
        return 0.0
    return float(2 * recall * precision / (recall + precision))


def median_contrast(values, mask: CellMask) -> tuple:
    """Median value over island and sea cells, and their ratio sea/island."""
    v = np.asarray(values, dtype=float)
    if not mask.island.any() or not mask.sea.any():
        raise ValueError("mask needs both island and sea cells")
    isl = float(np.median(v[mask.island]))
    sea = float(np.median(v[mask.sea]))
    return isl, sea, (sea / isl if isl > 0 else np.inf)
