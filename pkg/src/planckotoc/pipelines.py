"""Config-driven experiments: model setup, the eight experiment kinds, manifests.

A configuration is a TOML document (or the equivalent dict)::

    name = "fig1"
    seed = 0

    [model]
    type = "kicked_rotor"      # kicked_rotor | lmg | iho
    K = 4.7
    L = 30

    [paper_scale.model]        # merged into [model] under --paper-scale
    L = 60

    [[experiment]]
    kind = "quantum_section"
    steps = 70

Cells are given as ``[q, p]`` points (for the kicked rotor in units of
2 pi, matching the plotted axes) or as the string ``"saddle"``.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import analysis, classical, models, observables, otoc
from .io import render_heatmap, software_version, write_csv
from .numerics import SpectralPropagator, eig_hermitian
from .planck import GridError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

TWO_PI = 2 * math.pi
MODEL_TYPES = ("kicked_rotor", "lmg", "iho")
KINDS = ("classical_section", "quantum_section", "otoc_curve", "spread_map", "entropy_curve",
         "width_curve", "ehrenfest", "lyapunov_report")
PAIR_LABELS = ("Q", "P", "q", "p")

MODEL_KEYS = {
    "kicked_rotor": {"type": None, "K": float, "L": int},
    "lmg": {"type": None, "N": int, "L": int, "xi": float},
    "iho": {"type": None, "hbar": float, "dx": float, "p_cutoff": float, "kinetic": str},
}
TIME_KEYS = {"steps": int, "stride": int, "t_max": float, "dt": float, "times": list}
KIND_KEYS = {
    "classical_section": {"n_samples": int, "n_iterations": int, "initial": list, "spread": float,
                          "period": float, "output": str},
    "quantum_section": {"steps": int, "t": float, "pair": list, "render": bool, "output": str},
    "otoc_curve": {**TIME_KEYS, "cells": list, "pair": list, "thermal": str, "temperature": float,
                   "thermal_pair": list},
    "spread_map": {"steps": int, "t": float, "cells": list, "wrap": bool},
    "entropy_curve": {**TIME_KEYS, "cells": list},
    "width_curve": {**TIME_KEYS, "cells": list},
    "ehrenfest": {**TIME_KEYS, "cell": None, "start": list, "start_shift": list, "threshold": float,
                  "flow_dt": float},
    "lyapunov_report": {**TIME_KEYS, "cell": None, "pairs": list, "width": bool, "window": list,
                        "start_shift": list, "threshold": float, "thermal_pair": list,
                        "temperature": float, "population_energy": float, "flow_dt": float},
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message

    def as_json(self) -> str:
        return json.dumps({"error": "config", "field": self.field, "message": self.message})


@dataclass
class ExperimentConfig:
    name: str
    seed: int
    model: dict
    experiments: list
    scale: str = "desk"
    source: str | None = None

    def echo(self) -> dict:
        return {"name": self.name, "seed": self.seed, "model": self.model,
                "experiments": self.experiments, "scale": self.scale, "source": self.source}


def _check_keys(table: dict, allowed: dict, where: str) -> None:
    for k, v in table.items():
        if k not in allowed:
            raise ConfigError(f"{where}.{k}", f"unknown key (allowed: {', '.join(sorted(allowed))})")
        typ = allowed[k]
        if typ is float and isinstance(v, (int, float)) and not isinstance(v, bool):
            continue
        if typ is not None and not isinstance(v, typ) or (typ is int and isinstance(v, bool)):
            raise ConfigError(f"{where}.{k}", f"expected {typ.__name__}, got {type(v).__name__}")


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(source, scale: str = "desk", seed: int | None = None) -> ExperimentConfig:
    """Parse and validate a configuration file path, TOML string path, or dict."""
    if scale not in ("desk", "paper"):
        raise ConfigError("scale", "must be 'desk' or 'paper'")
    origin = None
    if isinstance(source, dict):
        raw = copy.deepcopy(source)
    else:
        origin = str(source)
        try:
            raw = tomllib.loads(Path(source).read_text())
        except FileNotFoundError:
            raise ConfigError("config", f"file not found: {source}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("config", f"TOML syntax error: {exc}") from None
    _check_keys(raw, {"name": str, "seed": int, "model": dict, "paper_scale": dict,
                      "experiment": list, "description": str}, "config")
    if scale == "paper" and "paper_scale" in raw:
        extra = raw["paper_scale"]
        _check_keys(extra, {"model": dict, "experiment": list}, "paper_scale")
        raw["model"] = _merge(raw.get("model", {}), extra.get("model", {}))
        if "experiment" in extra:
            exps = raw.get("experiment", [])
            for i, upd in enumerate(extra["experiment"]):
                if i < len(exps):
                    exps[i] = _merge(exps[i], upd)
    model = raw.get("model")
    if not isinstance(model, dict):
        raise ConfigError("model", "missing [model] table")
    mtype = model.get("type")
    if mtype not in MODEL_TYPES:
        raise ConfigError("model.type", f"must be one of {', '.join(MODEL_TYPES)}")
    _check_keys(model, MODEL_KEYS[mtype], "model")
    exps = raw.get("experiment")
    if not exps:
        raise ConfigError("experiment", "at least one [[experiment]] table is required")
    for i, e in enumerate(exps):
        where = f"experiment[{i}]"
        if not isinstance(e, dict):
            raise ConfigError(where, "must be a table")
        kind = e.get("kind")
        if kind not in KINDS:
            raise ConfigError(f"{where}.kind", f"must be one of {', '.join(KINDS)}")
        _check_keys({k: v for k, v in e.items() if k != "kind"}, KIND_KEYS[kind], where)
    cfg = ExperimentConfig(name=str(raw.get("name", "experiment")),
                           seed=int(seed if seed is not None else raw.get("seed", 0)),
                           model=model, experiments=exps, scale=scale, source=origin)
    ctx = ModelContext(cfg.model)
    for i, e in enumerate(exps):
        ctx.validate(e, f"experiment[{i}]")
    return cfg


# -- models -----------------------------------------------------------------------------

class ModelContext:
    """Lazily built operators for one model configuration."""

    def __init__(self, model: dict, workers: int = 1):
        self.cfg = model
        self.workers = int(workers)
        self.type = model["type"]
        try:
            if self.type == "kicked_rotor":
                self.spec = models.KickedRotorSpec(K=float(model.get("K", 4.7)), L=int(model.get("L", 30)))
            elif self.type == "lmg":
                if "N" in model and "L" in model and model["N"] != model["L"] ** 2 - 1:
                    raise ConfigError("model.N", "N and L disagree (need N = L**2 - 1)")
                N = int(model["N"]) if "N" in model else int(model.get("L", 41)) ** 2 - 1
                self.spec = models.LmgSpec(N=N, xi=float(model.get("xi", -2.0)))
                self.spec.L
            else:
                self.spec = models.IhoSpec(hbar=float(model.get("hbar", 0.002)),
                                           dx=float(model.get("dx", 0.002)),
                                           p_cutoff=float(model.get("p_cutoff", 1.0)),
                                           kinetic=str(model.get("kinetic", "spectral")))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError("model", str(exc)) from None

    @property
    def discrete(self) -> bool:
        return self.type == "kicked_rotor"

    @property
    def coordinate_scale(self) -> float:
        return TWO_PI if self.type == "kicked_rotor" else 1.0

    def metadata(self) -> dict:
        meta = self.spec.metadata()
        meta["grid"] = self.grid.metadata()
        meta["coordinate_scale"] = self.coordinate_scale
        return meta

    @cached_property
    def grid(self):
        if self.type == "kicked_rotor":
            return self.spec.grid()
        if self.type == "lmg":
            return self.basis.grid
        return self.spec.grid()

    @cached_property
    def basis(self):
        if self.type == "kicked_rotor":
            return models.kicked_rotor_basis(self.spec)
        if self.type == "lmg":
            return models.lmg_basis(self.spec)
        return models.iho_basis(self.spec)

    @property
    def hbar(self) -> float:
        return self.spec.hbar_eff if self.type == "lmg" else self.spec.hbar

    @cached_property
    def hamiltonian(self):
        if self.type == "lmg":
            return models.lmg_hamiltonian(self.spec)
        if self.type == "iho":
            return models.iho_hamiltonian(self.spec)
        raise TypeError("the kicked rotor has no static Hamiltonian")

    @cached_property
    def decomp(self):
        return eig_hermitian(self.hamiltonian)

    @cached_property
    def floquet(self):
        return models.kicked_rotor_floquet(self.spec)

    @cached_property
    def propagator(self) -> SpectralPropagator:
        # the LMG Hamiltonian is written in units where hbar_eff enters through N
        hbar = self.spec.hbar if self.type == "iho" else 1.0
        return SpectralPropagator(self.hamiltonian, hbar=hbar, decomp=self.decomp)

    @property
    def evolution(self):
        return self.floquet if self.discrete else self.propagator

    @cached_property
    def operators(self) -> dict:
        if self.type == "kicked_rotor":
            q = np.diag(self.spec.positions()).astype(complex)
            p = models.kicked_rotor_momentum_operator(self.spec)
        elif self.type == "lmg":
            q = None
            p = models.lmg_momentum_operator(self.spec.N).astype(complex)
        else:
            q = models.iho_position_operator(self.spec)
            p = models.iho_momentum_operator(self.spec)
        return otoc.operator_set(self.basis, q=q, p=p)

    @cached_property
    def system(self) -> classical.ClassicalSystem:
        if self.type == "kicked_rotor":
            return classical.StandardMap(self.spec.K)
        if self.type == "lmg":
            return classical.LmgMeanField(self.spec.xi)
        return classical.InvertedOscillator(wall=(self.spec.q_min, self.spec.q_max))

    @property
    def saddle(self):
        if self.type == "lmg":
            return (math.pi, 0.0)
        if self.type == "iho":
            return (0.0, 0.0)
        return None

    # -- config helpers

    def point(self, spec, where: str):
        if spec == "saddle":
            if self.saddle is None:
                raise ConfigError(where, "this model has no saddle point")
            return self.saddle
        if not (isinstance(spec, list) and len(spec) == 2 and all(isinstance(v, (int, float)) for v in spec)):
            raise ConfigError(where, "expected [q, p] or \"saddle\"")
        s = self.coordinate_scale
        return (float(spec[0]) * s, float(spec[1]) * s)

    def cell(self, spec, where: str) -> int:
        q, p = self.point(spec, where)
        j = int(self.grid.locate(q, p))
        if j < 0:
            raise ConfigError(where, f"point {spec} lies outside the phase-space box")
        return j

    def times(self, e: dict, where: str) -> np.ndarray:
        if "times" in e:
            t = np.asarray(e["times"], dtype=float)
        elif self.discrete:
            steps = int(e.get("steps", 70))
            stride = int(e.get("stride", 1))
            if steps < 0 or stride < 1:
                raise ConfigError(where, "steps must be >= 0 and stride >= 1")
            t = np.arange(0, steps + 1, stride, dtype=float)
        else:
            t_max = float(e.get("t_max", 3.0))
            dt = float(e.get("dt", 0.05))
            if t_max < 0 or dt <= 0:
                raise ConfigError(where, "t_max must be >= 0 and dt > 0")
            t = np.round(np.arange(0, int(round(t_max / dt)) + 1) * dt, 12)
        if t.size == 0 or np.any(np.diff(t) <= 0):
            raise ConfigError(f"{where}.times", "time grid must be non-empty and strictly increasing")
        if self.discrete and np.any(t != np.round(t)):
            raise ConfigError(f"{where}.times", "kicked-rotor times are integer kick counts")
        return t

    def pair(self, spec, where: str) -> tuple:
        if not (isinstance(spec, list) and len(spec) == 2 and all(s in PAIR_LABELS for s in spec)):
            raise ConfigError(where, f"pair must be two of {PAIR_LABELS}")
        for s in spec:
            if s not in self.operators_available:
                raise ConfigError(where, f"operator {s!r} is not defined for model {self.type}")
        return tuple(spec)

    @property
    def operators_available(self):
        return ("Q", "P", "p") if self.type == "lmg" else PAIR_LABELS

    def final_time(self, e: dict, where: str) -> float:
        if self.discrete:
            if "t" in e:
                raise ConfigError(f"{where}.t", "use 'steps' for the kicked rotor")
            n = e.get("steps", 70)
            if n < 0:
                raise ConfigError(f"{where}.steps", "must be >= 0")
            return float(n)
        if "steps" in e:
            raise ConfigError(f"{where}.steps", "use 't' for continuous-time models")
        t = float(e.get("t", 1.0))
        if t < 0:
            raise ConfigError(f"{where}.t", "must be >= 0")
        return t

    def validate(self, e: dict, where: str) -> None:
        kind = e["kind"]
        for key in ("cells",):
            if key in e:
                if not isinstance(e[key], list) or not e[key]:
                    raise ConfigError(f"{where}.{key}", "expected a non-empty list of cells")
                for i, c in enumerate(e[key]):
                    self.cell(c, f"{where}.{key}[{i}]")
        if "cell" in e:
            self.cell(e["cell"], f"{where}.cell")
        if "pair" in e:
            self.pair(e["pair"], f"{where}.pair")
        if "thermal_pair" in e:
            self.pair(e["thermal_pair"], f"{where}.thermal_pair")
        for i, pr in enumerate(e.get("pairs", [])):
            self.pair(pr, f"{where}.pairs[{i}]")
        if kind in ("otoc_curve", "entropy_curve", "width_curve", "ehrenfest", "lyapunov_report"):
            self.times(e, where)
        if kind in ("quantum_section", "spread_map"):
            self.final_time(e, where)
        if kind in ("ehrenfest", "lyapunov_report") and "cell" not in e:
            raise ConfigError(f"{where}.cell", "required")
        if kind == "otoc_curve" and e.get("thermal", "none") not in ("none", "infinite", "gibbs"):
            raise ConfigError(f"{where}.thermal", "must be 'none', 'infinite' or 'gibbs'")
        if (kind == "otoc_curve" and e.get("thermal") == "gibbs") or "temperature" in e:
            if self.discrete:
                raise ConfigError(f"{where}.temperature", "Gibbs states need a static Hamiltonian")
            if float(e.get("temperature", 0.1)) <= 0:
                raise ConfigError(f"{where}.temperature", "must be positive")
        if "window" in e:
            w = e["window"]
            if not (len(w) == 2 and w[0] < w[1]):
                raise ConfigError(f"{where}.window", "expected [t_lo, t_hi] with t_lo < t_hi")
        if kind == "classical_section":
            if int(e.get("n_samples", 200)) < 1 or int(e.get("n_iterations", 100)) < 0:
                raise ConfigError(where, "n_samples >= 1 and n_iterations >= 0 required")
        if kind == "ehrenfest" and "start" in e:
            self.cell(e["start"], f"{where}.start")

    def unitary(self, t: float) -> np.ndarray:
        if self.discrete:
            return np.linalg.matrix_power(self.floquet, int(round(t)))
        return self.propagator.unitary(t) if t else np.eye(self.basis.D, dtype=complex)


# -- experiment kinds ---------------------------------------------------------------------

class Outputs:
    def __init__(self, root: Path):
        self.root = Path(root)
        self.files: list[Path] = []

    def add(self, path: Path) -> Path:
        self.files.append(Path(path))
        return path

    def csv(self, name: str, columns, rows, meta: dict, int_columns=()) -> Path:
        return self.add(write_csv(self.root / name, columns, rows, meta, int_columns))

    def json(self, name: str, payload: dict) -> Path:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_plain(payload), indent=2, sort_keys=True) + "\n")
        return self.add(path)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _cell_tag(ctx: ModelContext, cell: int) -> str:
    m, n = (int(v) for v in ctx.grid.mn(cell))
    return f"m{m}_n{n}"


def _meta(ctx: ModelContext, e: dict, **extra) -> dict:
    return {**ctx.metadata(), "experiment": e, **extra}


def _cells(ctx, e) -> list:
    default = ["saddle"] if ctx.saddle else [[0.5, 0.5]]
    return [ctx.cell(c, f"cells[{i}]") for i, c in enumerate(e.get("cells", default))]


def _per_cell(ctx, fn, cells) -> list:
    """``[fn(c) for c in cells]``, spread over ``ctx.workers`` threads, results in cell order."""
    if ctx.workers <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ThreadPoolExecutor(max_workers=ctx.workers) as pool:
        return list(pool.map(fn, cells))


def run_classical_section(ctx, e, out: Outputs, seed: int) -> dict:
    init = e.get("initial")
    initial = ctx.point(init, "initial") if init is not None else None
    s = ctx.coordinate_scale
    g = ctx.grid
    box = ((g.q_origin, g.q_origin + g.q_extent), (g.p_origin, g.p_origin + g.p_extent))
    if ctx.type == "lmg":
        # stay off the |p| = 1/2 coordinate singularity
        box = ((0.0, TWO_PI), (-0.45, 0.45))
    cloud = classical.poincare_section(ctx.system, int(e.get("n_samples", 200)), int(e.get("n_iterations", 100)),
                                       seed=seed, initial=initial, spread=float(e.get("spread", 0.0)),
                                       period=float(e.get("period", 1.0)), box=box)
    name = e.get("output", "classical_section.csv")
    out.csv(name, ["q", "p"], cloud.points / s, _meta(ctx, e, seed=seed, cloud=cloud.metadata()))
    mask = analysis.classify_cells(cloud, ctx.grid)
    return {"points": int(cloud.points.shape[0]), "island_cells": int(mask.island.sum()),
            "sea_cells": int(mask.sea.sum())}


def _pair_ops(ctx, pair):
    ops = ctx.operators
    return ops[pair[0]], ops[pair[1]]


def _section_values(ctx, t: float, pair) -> np.ndarray:
    A, B = _pair_ops(ctx, pair)
    if ctx.discrete:
        n = int(round(t))
        return otoc.otoc_sweep(ctx.floquet, ctx.basis, n, A, B, stride=max(n, 1), pair=pair).values[-1]
    times = [0.0, t] if t > 0 else [0.0]
    return otoc.spectral_sweep(ctx.propagator, ctx.basis, times, A, B, pair=pair).values[-1]


def _section_rows(ctx, values):
    g = ctx.grid
    m, n = g.mn(np.arange(g.D))
    coords = g.cell_coords()
    return np.column_stack([m, n, coords[:, 0], coords[:, 1], values])


def run_quantum_section(ctx, e, out: Outputs, seed: int) -> dict:
    pair = ctx.pair(e.get("pair", ["Q", "P"]), "pair")
    t = ctx.final_time(e, "quantum_section")
    values = _section_values(ctx, t, pair)
    name = e.get("output", "quantum_section.csv")
    path = out.csv(name, ["m", "n", "Q", "P", "value"], _section_rows(ctx, values),
                   _meta(ctx, e, t=t, pair=list(pair)), int_columns=("m", "n"))
    if e.get("render", True):
        out.add(render_heatmap(path))
    return {"t": t, "mean": float(values.mean()), "min": float(values.min()), "max": float(values.max())}


def _cell_records(ctx, times, pair, cells):
    A, B = _pair_ops(ctx, pair)
    if ctx.discrete:
        sweep = otoc.otoc_sweep(ctx.floquet, ctx.basis, int(times[-1]), A, B, stride=1, pair=pair)
        pick = np.searchsorted(sweep.times, times)
        return [sweep.values[pick, c] for c in cells], sweep.values[pick].mean(axis=1)
    track = otoc.spectral_track(ctx.propagator, A, times, label=pair[0])
    recs = otoc.cells_otoc(track, B, ctx.basis, cells, pair_label=pair[1])
    return [r.values for r in recs], None


def _gibbs_thermal(ctx, times, pair, T):
    A, B = _pair_ops(ctx, pair)
    track = otoc.spectral_track(ctx.propagator, A, times, label=pair[0])
    w = models.gibbs_weights(ctx.decomp, T)
    return otoc.thermal_otoc(track, B, weight=w, pair_label=pair[1], label=f"thermal:T={T}").values


def _infinite_thermal(ctx, times, pair):
    A, B = _pair_ops(ctx, pair)
    track = otoc.spectral_track(ctx.propagator, A, times, label=pair[0])
    D = track.dim
    return otoc.thermal_otoc(track, B, weight=np.full(D, 1.0 / D), pair_label=pair[1]).values


def run_otoc_curve(ctx, e, out: Outputs, seed: int) -> dict:
    times = ctx.times(e, "otoc_curve")
    pair = ctx.pair(e.get("pair", ["Q", "P"]), "pair")
    cells = _cells(ctx, e)
    curves, cell_mean = _cell_records(ctx, times, pair, cells)
    summary = {"cells": {}}
    for c, v in zip(cells, curves):
        tag = _cell_tag(ctx, c)
        Q, P = ctx.grid.cell_coords()[c]
        out.csv(f"otoc_{pair[0]}{pair[1]}_{tag}.csv", ["t", "value"], np.column_stack([times, v]),
                _meta(ctx, e, cell=int(c), Q=Q, P=P, pair=list(pair)))
        sat = analysis.saturation_stats(v, 0.3)
        summary["cells"][tag] = {"cell": int(c), "tail_mean": sat[0], "tail_std": sat[1]}
    mode = e.get("thermal", "none")
    if mode != "none":
        tpair = ctx.pair(e.get("thermal_pair", list(pair)), "thermal_pair")
        if mode == "infinite":
            if ctx.discrete and tpair == pair:
                th = cell_mean
            elif ctx.discrete:
                A, B = _pair_ops(ctx, tpair)
                tr = otoc.heisenberg_track(ctx.floquet, A, int(times[-1]), 1, label=tpair[0], keep=False)
                th = otoc.thermal_otoc(tr, B).values[np.searchsorted(tr.times, times)]
            else:
                th = _infinite_thermal(ctx, times, tpair)
            label = "inf"
        else:
            T = float(e.get("temperature", 0.1))
            th = _gibbs_thermal(ctx, times, tpair, T)
            label = f"T{T:g}"
        out.csv(f"otoc_{tpair[0]}{tpair[1]}_thermal_{label}.csv", ["t", "value"], np.column_stack([times, th]),
                _meta(ctx, e, thermal=label, pair=list(tpair)))
        summary["thermal"] = {"label": label, "tail_mean": analysis.saturation_stats(th, 0.3)[0]}
    return summary


def run_spread_map(ctx, e, out: Outputs, seed: int) -> dict:
    t = ctx.final_time(e, "spread_map")
    U = ctx.unitary(t)
    Uc = classical.cell_frame(U, ctx.basis)
    gmap = classical.coarse_map(ctx.system, ctx.grid, t, U_cells=Uc)
    f = otoc.spreading_function(None, ctx.basis, gmap, U_cells=Uc)
    s = ctx.coordinate_scale
    summary = {"t": t, "collisions": gmap.collisions, "flagged": int(gmap.flagged.sum()), "cells": {}}
    cells = _cells(ctx, e)
    basis, wrap = ctx.basis, bool(e.get("wrap", True))
    fields = _per_cell(ctx, lambda c: otoc.spread_field(f, gmap, basis, c, wrap=wrap), cells)
    for c, field in zip(cells, fields):
        tag = _cell_tag(ctx, c)
        out.csv(f"spread_{tag}.csv", ["dQ", "dP", "weight"],
                np.column_stack([field.dQ / s, field.dP / s, field.weights]),
                _meta(ctx, e, cell=int(c), t=t, collisions=gmap.collisions))
        summary["cells"][tag] = {"total_weight": float(field.weights.sum()),
                                 "second_order": otoc.second_order_otoc(f, gmap, ctx.basis, c),
                                 "magnitude": float(gmap.magnitude[c])}
    return summary


def run_entropy_curve(ctx, e, out: Outputs, seed: int) -> dict:
    times = ctx.times(e, "entropy_curve")
    summary = {}
    cells = _cells(ctx, e)
    evolution, basis = ctx.evolution, ctx.basis
    tracks = _per_cell(ctx, lambda c: observables.entropy_track(evolution, basis, c, times), cells)
    for c, tr in zip(cells, tracks):
        tag = _cell_tag(ctx, c)
        out.csv(f"entropy_{tag}.csv", ["t", "value"], np.column_stack([times, tr.values]),
                _meta(ctx, e, cell=int(c)))
        summary[tag] = {"final": float(tr.values[-1])}
    return summary


def run_width_curve(ctx, e, out: Outputs, seed: int) -> dict:
    times = ctx.times(e, "width_curve")
    summary = {}
    cells = _cells(ctx, e)
    evolution, basis = ctx.evolution, ctx.basis
    widths = _per_cell(ctx, lambda c: otoc.width_track(evolution, basis, c, times), cells)
    for c, w in zip(cells, widths):
        tag = _cell_tag(ctx, c)
        out.csv(f"width_{tag}.csv", ["t", "value"], np.column_stack([times, w]), _meta(ctx, e, cell=int(c)))
        summary[tag] = {"final": float(w[-1])}
    return summary


def _ehrenfest(ctx, e, times, cell):
    g = ctx.grid
    Q, P = g.cell_coords()[cell]
    if "start" in e:
        start = ctx.point(e["start"], "start")
    else:
        sq, sp = e.get("start_shift", [-1, 0])
        start = (Q + sq * g.dq, P + sp * g.dp)
    return observables.ehrenfest_delta(ctx.evolution, ctx.basis, cell, start, times, ctx.system,
                                       dt=float(e.get("flow_dt", 1e-3)),
                                       threshold=float(e.get("threshold", 5.0))), start


def run_ehrenfest(ctx, e, out: Outputs, seed: int) -> dict:
    times = ctx.times(e, "ehrenfest")
    cell = ctx.cell(e["cell"], "cell")
    tr, start = _ehrenfest(ctx, e, times, cell)
    rows = np.column_stack([times, tr.delta, tr.quantum, tr.classical])
    out.csv("ehrenfest.csv", ["t", "delta", "Q_quantum", "P_quantum", "q_classical", "p_classical"], rows,
            _meta(ctx, e, cell=int(cell), start=list(start), plateau=tr.plateau, t_E=tr.t_E))
    return {"t_E": tr.t_E, "plateau": tr.plateau, "start": list(start)}


def run_lyapunov_report(ctx, e, out: Outputs, seed: int) -> dict:
    times = ctx.times(e, "lyapunov_report")
    cell = ctx.cell(e["cell"], "cell")
    report = {"cell": int(cell), "cell_center": ctx.grid.cell_coords()[cell].tolist()}
    if ctx.saddle is not None:
        lam = classical.saddle_lyapunov(ctx.system, ctx.saddle)
        report["classical_lyapunov"] = lam
        report["reference_exponent"] = 2 * lam
    if "window" in e:
        window = tuple(float(v) for v in e["window"])
        report["window_source"] = "config"
    else:
        tr, start = _ehrenfest(ctx, e, times, cell)
        if not math.isfinite(tr.t_E):
            raise ConfigError("window", "no Ehrenfest time within the time grid; give an explicit window")
        window = analysis.default_window(tr.t_E)
        report["t_E"] = tr.t_E
        report["window_source"] = "0.2-0.8 t_E"
    report["window"] = list(window)
    fits = {}
    tag = _cell_tag(ctx, cell)
    for pair in e.get("pairs", [["Q", "P"]]):
        pair = ctx.pair(pair, "pairs")
        (vals,), _ = _cell_records(ctx, times, pair, [cell])
        key = f"C_{pair[0]}{pair[1]}"
        out.csv(f"{key}_{tag}.csv", ["t", "value"], np.column_stack([times, vals]),
                _meta(ctx, e, cell=int(cell), pair=list(pair)))
        fits[key] = _safe_fit(times, vals, window)
    if e.get("width", False):
        w = otoc.width_track(ctx.evolution, ctx.basis, cell, times)
        out.csv(f"W2_{tag}.csv", ["t", "value"], np.column_stack([times, w]), _meta(ctx, e, cell=int(cell)))
        fits["W2"] = _safe_fit(times, w, window)
    if "temperature" in e:
        T = float(e["temperature"])
        tpair = ctx.pair(e.get("thermal_pair", ["q", "q"]), "thermal_pair")
        th = _gibbs_thermal(ctx, times, tpair, T)
        key = f"thermal_{tpair[0]}{tpair[1]}_T{T:g}"
        out.csv(f"{key}.csv", ["t", "value"], np.column_stack([times, th]), _meta(ctx, e, temperature=T))
        fits[key] = _safe_fit(times, th, window)
        energy = float(e.get("population_energy", 0.05))
        report["gibbs_population_below"] = {
            "energy": energy, "value": models.cumulative_population(None, T, energy, decomp=ctx.decomp)}
    report["fits"] = fits
    if "reference_exponent" in report:
        ref = report["reference_exponent"]
        for f in fits.values():
            if f.get("exponent") is not None:
                f["relative_deviation"] = abs(f["exponent"] - ref) / ref
    out.json("lyapunov_report.json", report)
    return report


def _safe_fit(times, values, window) -> dict:
    try:
        return analysis.fit_exponential(times, values, window).as_dict()
    except analysis.FitError as exc:
        return {"exponent": None, "error": str(exc), "window": list(window)}


RUNNERS = {
    "classical_section": run_classical_section,
    "quantum_section": run_quantum_section,
    "otoc_curve": run_otoc_curve,
    "spread_map": run_spread_map,
    "entropy_curve": run_entropy_curve,
    "width_curve": run_width_curve,
    "ehrenfest": run_ehrenfest,
    "lyapunov_report": run_lyapunov_report,
}


@dataclass
class RunManifest:
    config: dict
    version: str
    wall_clock: float
    outputs: list = field(default_factory=list)
    results: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"config": self.config, "version": self.version, "wall_clock_seconds": self.wall_clock,
                "outputs": self.outputs, "results": self.results}


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run(config, out, seed: int | None = None, scale: str = "desk", threads: int | None = None) -> RunManifest:
    """Execute every experiment of ``config`` and write ``manifest.json`` into ``out``.

    BLAS runs single-threaded because OpenBLAS reductions change with the
    thread count. ``threads`` instead sizes a pool over independent per-cell
    tasks, collected in cell order, so outputs are byte-identical for any
    value.
    """
    if threads is not None and threads < 1:
        raise ConfigError("threads", "must be >= 1")
    with threadpool_limits(limits=1, user_api="blas"):
        return _run(config, out, seed, scale, threads or 1)


def _run(config, out, seed, scale, threads) -> RunManifest:
    cfg = config if isinstance(config, ExperimentConfig) else load_config(config, scale=scale, seed=seed)
    if seed is not None:
        cfg.seed = int(seed)
    root = Path(out)
    root.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    ctx = ModelContext(cfg.model, workers=threads)
    outputs = Outputs(root)
    results = []
    for i, e in enumerate(cfg.experiments):
        sub = Outputs(root / f"{i:02d}_{e['kind']}" if len(cfg.experiments) > 1 else root)
        try:
            res = RUNNERS[e["kind"]](ctx, e, sub, cfg.seed)
        except GridError as exc:
            raise ConfigError(f"experiment[{i}]", str(exc)) from None
        except ConfigError as exc:
            raise ConfigError(f"experiment[{i}].{exc.field}", exc.message) from None
        outputs.files.extend(sub.files)
        results.append({"kind": e["kind"], **_plain(res)})
    manifest = RunManifest(config=_plain(cfg.echo()), version=software_version(),
                           wall_clock=time.perf_counter() - t0)
    manifest.outputs = [{"path": str(p.relative_to(root)), "sha256": _sha256(p), "bytes": p.stat().st_size}
                        for p in outputs.files]
    manifest.results = results
    (root / "manifest.json").write_text(json.dumps(_plain(manifest.as_dict()), indent=2, sort_keys=True) + "\n")
    return manifest
