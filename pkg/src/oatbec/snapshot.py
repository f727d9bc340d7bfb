"""Binary field snapshots with a JSON sidecar.

The payload is raw little-endian float64 (re, im) pairs in row-major axis
order; the sidecar records geometry, points, lengths, time and component label.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .grid import Grid, make_grid

FORMAT_VERSION = 1


def write_snapshot(prefix, psi, grid: Grid, time, label, extra=None):
    """Write ``<prefix>.bin`` and ``<prefix>.json``; returns both paths."""
    prefix = Path(prefix)
    psi = np.asarray(psi)
    if psi.shape != grid.shape:
        raise ValueError(f"field shape {psi.shape} does not match grid {grid.shape}")
    bin_path = prefix.with_suffix(".bin")
    meta_path = prefix.with_suffix(".json")
    bin_path.parent.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(psi, dtype="<c16").tofile(bin_path)
    meta = {
        "format_version": FORMAT_VERSION,
        "dtype": "float64-le (re, im) pairs",
        "order": "row-major",
        "time_s": float(time),
        "component": str(label),
        **grid.to_dict(),
    }
    if extra:
        meta["extra"] = extra
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return bin_path, meta_path


def read_snapshot(prefix):
    """Return ``(psi, grid, meta)`` for a snapshot written by :func:`write_snapshot`."""
    prefix = Path(prefix)
    meta = json.loads(prefix.with_suffix(".json").read_text())
    grid = make_grid(meta["geometry"], meta["points"], meta["lengths"])
    raw = np.fromfile(prefix.with_suffix(".bin"), dtype="<f8")
    if raw.size != 2 * grid.size:
        raise ValueError(f"snapshot payload has {raw.size} floats, expected {2 * grid.size}")
    psi = (raw[0::2] + 1j * raw[1::2]).reshape(grid.shape)
    return psi, grid, meta
