"""CSV tables with metadata headers and a dependency-free PNG heatmap writer.

CSV layout::

    # planckotoc <version>
    # meta: {"model": "kicked_rotor", ...}
    t,value
    0.000000000000e+00,0.000000000000e+00
    ...

Lines starting with ``#`` are comments; the ``meta:`` line is one JSON object.
"""
from __future__ import annotations

import json
import math
import os
import struct
import subprocess
import zlib
from functools import lru_cache
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.12e"


class RaggedGridError(ValueError):
    """Section table does not cover a full rectangular lattice."""


@lru_cache(maxsize=1)
def software_version() -> str:
    from . import __version__
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=5, check=True)
        desc = out.stdout.strip()
        if desc:
            return f"{__version__}+g{desc}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def write_csv(path, columns, rows, meta: dict | None = None, int_columns=()) -> Path:
    """Write a numeric table; ``int_columns`` are printed as integers."""
    path = Path(path)
    data = np.asarray(rows, dtype=float)
    if data.ndim == 1:
        data = data.reshape(-1, len(columns))
    if data.shape[1] != len(columns):
        raise ValueError(f"{data.shape[1]} data columns for {len(columns)} names")
    fmts = ["%d" if c in int_columns else FLOAT_FMT for c in columns]
    lines = [f"# planckotoc {software_version()}",
             "# meta: " + json.dumps(_jsonable(meta or {}), sort_keys=True),
             ",".join(columns)]
    for row in data:
        lines.append(",".join(f % (int(round(v)) if f == "%d" else v) for f, v in zip(fmts, row)))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path):
    """Return ``(meta, columns, data)`` from a file written by :func:`write_csv`."""
    meta, columns, rows = {}, None, []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("meta:"):
                meta = json.loads(body[5:])
            continue
        if columns is None:
            columns = line.split(",")
            continue
        rows.append([float(v) for v in line.split(",")])
    if columns is None:
        raise ValueError(f"{path}: no column header")
    data = np.array(rows, dtype=float).reshape(-1, len(columns))
    return meta, columns, data


# -- PNG --------------------------------------------------------------------------

def _chunk(kind: bytes, payload: bytes) -> bytes:
    return (struct.pack(">I", len(payload)) + kind + payload
            + struct.pack(">I", zlib.crc32(kind + payload) & 0xFFFFFFFF))


def write_png(path, rgb: np.ndarray, text: dict | None = None) -> Path:
    """8-bit RGB PNG with optional ``tEXt`` chunks."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError("expected an (h, w, 3) uint8 array")
    h, w, _ = rgb.shape
    raw = b"".join(b"\x00" + rgb[r].tobytes() for r in range(h))
    parts = [b"\x89PNG\r\n\x1a\n",
             _chunk(b"IHDR", struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0))]
    for k, v in (text or {}).items():
        parts.append(_chunk(b"tEXt", k.encode("latin-1") + b"\x00" + str(v).encode("latin-1")))
    parts.append(_chunk(b"IDAT", zlib.compress(raw, 9)))
    parts.append(_chunk(b"IEND", b""))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(parts))
    return path


def read_png_text(path) -> dict:
    """``tEXt`` entries of a PNG (used to check axis metadata)."""
    data = Path(path).read_bytes()
    pos, out = 8, {}
    while pos < len(data):
        (n,) = struct.unpack(">I", data[pos:pos + 4])
        kind = data[pos + 4:pos + 8]
        body = data[pos + 8:pos + 8 + n]
        if kind == b"tEXt":
            k, v = body.split(b"\x00", 1)
            out[k.decode("latin-1")] = v.decode("latin-1")
        pos += 12 + n
    return out


def read_png_rgb(path) -> np.ndarray:
    """Decode a PNG written by :func:`write_png` (filter type 0 only)."""
    data = Path(path).read_bytes()
    pos, idat, w, h = 8, b"", 0, 0
    while pos < len(data):
        (n,) = struct.unpack(">I", data[pos:pos + 4])
        kind = data[pos + 4:pos + 8]
        body = data[pos + 8:pos + 8 + n]
        if kind == b"IHDR":
            w, h = struct.unpack(">II", body[:8])
        elif kind == b"IDAT":
            idat += body
        pos += 12 + n
    raw = np.frombuffer(zlib.decompress(idat), dtype=np.uint8).reshape(h, 1 + 3 * w)
    return raw[:, 1:].reshape(h, w, 3).copy()


# blue (low) to red (high)
_ANCHORS = np.array([[0.0, 0, 0, 130], [0.25, 0, 90, 255], [0.5, 0, 220, 220],
                     [0.75, 255, 220, 0], [1.0, 200, 0, 0]])


def colormap(x: np.ndarray) -> np.ndarray:
    x = np.clip(np.asarray(x, dtype=float), 0, 1)
    chans = [np.interp(x, _ANCHORS[:, 0], _ANCHORS[:, c]) for c in (1, 2, 3)]
    return np.rint(np.stack(chans, axis=-1)).astype(np.uint8)


def section_to_grid(columns, data):
    """Rebuild the ``(L_q, L_p)`` value array from a section table."""
    idx = {c: i for i, c in enumerate(columns)}
    for need in ("m", "n", "value"):
        if need not in idx:
            raise RaggedGridError(f"section table lacks column {need!r}")
    if data.shape[0] == 0:
        raise RaggedGridError("empty section table")
    m = data[:, idx["m"]].astype(int)
    n = data[:, idx["n"]].astype(int)
    Lq, Lp = m.max() + 1, n.max() + 1
    if m.min() < 0 or n.min() < 0 or data.shape[0] != Lq * Lp:
        raise RaggedGridError(f"{data.shape[0]} rows do not fill a {Lq} x {Lp} lattice")
    grid = np.full((Lq, Lp), np.nan)
    grid[m, n] = data[:, idx["value"]]
    if np.isnan(grid).any():
        raise RaggedGridError("duplicate or missing lattice sites")
    return grid


def render_heatmap(csv_path, png_path=None, block: int = 8) -> Path:
    """Render a section CSV as a PNG: ``Q`` to the right, ``P`` upwards.

    Colours scale linearly between the minimum and maximum value. Axis ranges
    go into ``tEXt`` chunks, divided by ``coordinate_scale`` from the table
    metadata (2 pi for the kicked rotor).
    """
    meta, columns, data = read_csv(csv_path)
    grid = section_to_grid(columns, data)
    vmin, vmax = float(grid.min()), float(grid.max())
    span = vmax - vmin
    x = (grid - vmin) / span if span > 0 else np.zeros_like(grid)
    img = colormap(x.T[::-1])
    img = np.repeat(np.repeat(img, block, axis=0), block, axis=1)
    g = meta.get("grid", {})
    scale = float(meta.get("coordinate_scale", 1.0))
    text = {"vmin": repr(vmin), "vmax": repr(vmax), "x_axis": "Q", "y_axis": "P",
            "coordinate_scale": repr(scale)}
    if g:
        text["x_range"] = json.dumps([g["q_origin"] / scale, (g["q_origin"] + g["q_extent"]) / scale])
        text["y_range"] = json.dumps([g["p_origin"] / scale, (g["p_origin"] + g["p_extent"]) / scale])
    png_path = Path(png_path) if png_path is not None else Path(os.fspath(csv_path)).with_suffix(".png")
    return write_png(png_path, img, text)
