"""Snapshots (text header plus CSV) and height-field triangle meshes."""

from __future__ import annotations

import io

import numpy as np

from .errors import ConfigError
from .grid_fields import Grid2, ScalarField, SymMatrixField, VectorField

_FMT = "%.17g"


def _columns(name, f):
    if isinstance(f, ScalarField):
        return [name], [f.values]
    if isinstance(f, VectorField):
        return [f"{name}{j + 1}" for j in range(f.k)], list(f.values)
    if isinstance(f, SymMatrixField):
        return [f"{name}11", f"{name}12", f"{name}22"], list(f.entries())
    raise ConfigError(f"cannot store {type(f).__name__}")


def save_snapshot(path, fields: dict, meta: dict | None = None):
    """Write fields on a common grid: ``# key=value`` header, then CSV rows ``x1,x2,...``.

    Values use 17 significant digits so a reload is bit-exact.  Rows run
    over ``x1`` (outer) and ``x2`` (inner).
    """
    if not fields:
        raise ConfigError("no fields to save")
    grids = {f.grid for f in fields.values()}
    if len(grids) != 1:
        raise ConfigError("snapshot fields must share a grid")
    g = grids.pop()
    names, arrays = [], []
    kinds = []
    for name, f in fields.items():
        cn, ca = _columns(name, f)
        names += cn
        arrays += ca
        kinds.append(f"{name}:{type(f).__name__}")
    X1, X2 = g.mesh
    data = np.column_stack([X1.ravel(), X2.ravel()] + [a.ravel() for a in arrays])
    buf = io.StringIO()
    head = {"origin1": repr(g.origin[0]), "origin2": repr(g.origin[1]), "h": repr(g.h),
            "nx": g.nx, "ny": g.ny, "boundary": g.boundary, "margin": repr(g.margin),
            "fd_order": g.fd_order, "fields": ";".join(kinds)}
    for k, v in (meta or {}).items():
        head[k] = v
    for k, v in head.items():
        buf.write(f"# {k}={v}\n")
    buf.write(",".join(["x1", "x2"] + names) + "\n")
    np.savetxt(buf, data, fmt=_FMT, delimiter=",")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def load_snapshot(path):
    """Inverse of :func:`save_snapshot`; returns ``(grid, fields, header)``."""
    head = {}
    with open(path) as fh:
        lines = fh.readlines()
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        k, _, v = lines[i][1:].strip().partition("=")
        head[k.strip()] = v.strip()
        i += 1
    cols = lines[i].strip().split(",")
    data = np.loadtxt(lines[i + 1:], delimiter=",", ndmin=2)
    try:
        g = Grid2((float(head["origin1"]), float(head["origin2"])), float(head["h"]),
                  int(head["nx"]), int(head["ny"]), head["boundary"], float(head["margin"]),
                  int(head["fd_order"]))
    except KeyError as exc:
        raise ConfigError(f"snapshot header lacks {exc}") from None
    shape = g.shape
    col = {c: data[:, j].reshape(shape) for j, c in enumerate(cols)}
    fields = {}
    for item in head.get("fields", "").split(";"):
        if not item:
            continue
        name, kind = item.split(":")
        if kind == "ScalarField":
            fields[name] = ScalarField(g, col[name])
        elif kind == "VectorField":
            comps = []
            j = 1
            while f"{name}{j}" in col:
                comps.append(col[f"{name}{j}"])
                j += 1
            fields[name] = VectorField(g, np.stack(comps))
        elif kind == "SymMatrixField":
            fields[name] = SymMatrixField(g, col[f"{name}11"], col[f"{name}12"], col[f"{name}22"])
    return g, fields, head


def height_mesh(f: ScalarField, stride: int = 1):
    """Vertices ``(x1, x2, f)`` and triangles (0-based) of the height field."""
    if stride < 1:
        raise ConfigError("stride must be positive")
    g = f.grid
    X1, X2 = g.mesh
    sl = (slice(None, None, stride), slice(None, None, stride))
    x, y, z = X1[sl], X2[sl], f.values[sl]
    nx, ny = z.shape
    verts = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    idx = np.arange(nx * ny).reshape(nx, ny)
    a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    tris = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return verts, tris


def export_mesh(path, f: ScalarField, stride: int = 1):
    """Write an ASCII triangle mesh with ``v x y z`` and ``f i j k`` (1-based) lines."""
    verts, tris = height_mesh(f, stride)
    buf = io.StringIO()
    np.savetxt(buf, verts, fmt="v %.17g %.17g %.17g")
    np.savetxt(buf, tris + 1, fmt="f %d %d %d")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())
    return len(verts), len(tris)
