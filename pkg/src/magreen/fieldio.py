"""Binary and CSV persistence of grid fields.

Binary layout (little endian)::

    8 bytes   magic b"MAGFLD1\\0"
    u32       dim
    u32[dim]  extents (nodes per axis)
    f64       h
    f64[2*dim] bbox (lower corner, then upper corner)
    u32       length of the JSON metadata block, then the block (UTF-8)
    payload   float64 node values, row-major, one array after another

The metadata lists the stored fields with their shapes; trailing component
axes (vectors, matrices) follow the node axes.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .grid import Grid, build_grid, parse_domain

MAGIC = b"MAGFLD1\0"


def write_fields(path, grid: Grid, fields: dict, meta: dict | None = None):
    """Write named arrays defined on ``grid`` to ``path``."""
    path = Path(path)
    lo, hi = grid.bbox
    names = list(fields)
    info = {
        "domain": grid.domain.spec,
        "fields": [{"name": k, "shape": list(np.shape(fields[k]))} for k in names],
        "meta": meta or {},
    }
    blob = json.dumps(info, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", grid.dim))
        fh.write(struct.pack(f"<{grid.dim}I", *grid.shape))
        fh.write(struct.pack("<d", grid.h))
        fh.write(struct.pack(f"<{2 * grid.dim}d", *lo, *hi))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for k in names:
            arr = np.ascontiguousarray(fields[k], dtype="<f8")
            if arr.shape[: grid.dim] != grid.shape:
                raise ConfigurationError(f"field {k!r} has shape {arr.shape}, grid is {grid.shape}")
            fh.write(arr.tobytes())


def read_fields(path):
    """Read a field file; returns ``(grid, fields, meta)``.

    The grid is rebuilt from the stored domain string and spacing and checked
    against the stored extents.
    """
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ConfigurationError(f"{path} is not a field file")
        (dim,) = struct.unpack("<I", fh.read(4))
        extents = struct.unpack(f"<{dim}I", fh.read(4 * dim))
        (h,) = struct.unpack("<d", fh.read(8))
        fh.read(16 * dim)
        (n,) = struct.unpack("<I", fh.read(4))
        info = json.loads(fh.read(n).decode())
        grid = build_grid(parse_domain(info["domain"]), h)
        if tuple(grid.shape) != tuple(extents):
            raise ConfigurationError(f"stored extents {extents} do not match the rebuilt grid {grid.shape}")
        fields = {}
        for spec in info["fields"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape))
            fields[spec["name"]] = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape).copy()
    return grid, fields, info.get("meta", {})


def write_csv(path, grid: Grid, field, mask=None):
    """CSV with columns ``x, y[, z], value`` for the nodes in ``mask`` (default: finite values)."""
    field = np.asarray(field, dtype=float)
    if mask is None:
        mask = np.isfinite(field)
    pts = grid.points[mask]
    vals = field[mask]
    cols = ["x", "y", "z"][: grid.dim] + ["value"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for p, v in zip(pts, vals):
            w.writerow([repr(float(c)) for c in p] + [repr(float(v))])


def save_state(path, state):
    """Persist a potential state (fields plus solver record)."""
    meta = {
        "residual": state.residual,
        "newton_iters": state.newton_iters,
        "density": state.density.source if state.density else "",
        "lam": state.density.lam if state.density else None,
        "Lam": state.density.Lam if state.density else None,
        "stats": {k: v for k, v in state.stats.items() if isinstance(v, (int, float, str))},
    }
    write_fields(path, state.grid, {"u": state.u, "grad": state.grad, "hess": state.hess, "f": state.f}, meta)


def load_state(path):
    """Inverse of :func:`save_state`; the cofactor field is recomputed from the Hessian."""
    from .solver import DensitySpec, PotentialState, cofactor_matrix

    grid, f, meta = read_fields(path)
    dens = None
    if meta.get("lam") is not None:
        src = meta.get("density", "")
        try:
            dens = DensitySpec.from_expression(src, meta["lam"], meta["Lam"])
        except Exception:
            dens = None
    return PotentialState(grid, f["u"], f["grad"], f["hess"], cofactor_matrix(f["hess"]), f["f"], dens,
                          meta.get("residual", 0.0), meta.get("newton_iters", 0), meta.get("stats", {}))
