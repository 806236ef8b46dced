"""Error norms, convergence-rate regression and legacy VTK output.

The VTK writer emits legacy ASCII (DATASET UNSTRUCTURED_GRID, file version
3.0) with one point per cell corner, duplicated between neighbouring cells
so discontinuous fields are representable. Fields are sampled at the cell
corners; floats are printed with 17 significant digits so a re-parse
reproduces them exactly. ``read_vtk`` is the matching minimal reader.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cellfield import EvalContext, SkeletonContext, gradient, inner, integrate, _wrap

__all__ = [
    "ConvergenceRecord",
    "error_norms",
    "l2_norm",
    "read_vtk",
    "slope",
    "write_vtk",
]


def l2_norm(e, trian, quad):
    """L2 norm of a scalar or vector field over a domain."""
    e = _wrap(e)
    return float(np.sqrt(np.sum(integrate(inner(e, e), trian, quad))))


def error_norms(e, trian, quad):
    """(L2, H1) norms of a field; the H1 norm adds the gradient's L2 norm."""
    e = _wrap(e)
    l2sq = float(np.sum(integrate(inner(e, e), trian, quad)))
    g = gradient(e)
    h1sq = l2sq + float(np.sum(integrate(inner(g, g), trian, quad)))
    return float(np.sqrt(l2sq)), float(np.sqrt(h1sq))


@dataclass
class ConvergenceRecord:
    """Mesh-size/error samples of one convergence study."""

    hs: list
    el2s: list
    eh1s: list
    order: int

    def __post_init__(self):
        if any(b >= a for a, b in zip(self.hs, self.hs[1:])):
            raise ValueError("mesh sizes must be strictly decreasing")

    def slopes(self):
        return slope(self.hs, self.el2s), slope(self.hs, self.eh1s)


def slope(hs, errors):
    """Least-squares slope of log10(error) against log10(h).

    Needs at least 3 samples to be meaningful.
    """
    if len(hs) < 3:
        raise ValueError("slope regression needs at least 3 samples")
    x = np.log10(np.asarray(hs, dtype=float))
    y = np.log10(np.asarray(errors, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


# -- VTK ------------------------------------------------------------------------

_VTK_LINE = 3
_VTK_QUAD = 9
_VTK_HEX = 12

# tensor-product corner order -> VTK node order
_CORNER_PERM = {1: [0, 1], 2: [0, 1, 3, 2], 3: [0, 1, 3, 2, 4, 5, 7, 6]}
_CELL_TYPE = {1: _VTK_LINE, 2: _VTK_QUAD, 3: _VTK_HEX}


def _ref_corners(dim):
    n = 2**dim
    idx = np.unravel_index(np.arange(n), (2,) * dim, order="F")
    pts = np.stack(idx, axis=1).astype(float)
    return pts[_CORNER_PERM[dim]]


def _sample_contexts(domain):
    """Contexts evaluating fields at the VTK corner points of each entry."""
    model = domain.model
    if domain.kind == "interior":
        pts = _ref_corners(model.dim)
        dummy = np.ones(len(pts))
        ctx = EvalContext(model, domain.cells, pts, dummy)
        yield np.arange(domain.num_entries), ctx, ctx.xphys
    else:
        fpts = _ref_corners(model.dim - 1)
        dummy = np.ones(len(fpts))
        for g in domain.groups:
            if domain.kind == "boundary":
                ctx = EvalContext(model, g.cells, g.embed(fpts), dummy, normal=g.normal)
                yield g.entries, ctx, ctx.xphys
            else:
                plus = EvalContext(
                    model, g.cells, g.embed(fpts, minus=False), dummy, normal=g.normal
                )
                minus = EvalContext(
                    model,
                    g.minus_cells,
                    g.embed(fpts, minus=True),
                    dummy,
                    normal=g.normal,
                )
                ctx = SkeletonContext(plus, minus)
                yield g.entries, ctx, plus.xphys


def _fmt(x):
    return f"{x:.17g}"


def write_vtk(domain, path, fields=()):
    """Write a domain and named fields to a legacy ASCII VTK file.

    ``fields`` is a mapping or sequence of (name, field) pairs; fields are
    sampled at the cell (or facet) corners. Scalars, vectors and second
    order tensors are supported; 2D values are zero-padded to 3 components.
    """
    if hasattr(fields, "items"):
        fields = list(fields.items())
    model = domain.model
    entry_dim = model.dim if domain.kind == "interior" else model.dim - 1
    npc = 2**entry_dim  # points per entry
    nent = domain.num_entries
    points = np.zeros((nent * npc, 3))
    data = {name: None for name, _ in fields}

    for entries, ctx, xphys in _sample_contexts(domain):
        rows = (entries[:, None] * npc + np.arange(npc)[None, :]).reshape(-1)
        points[rows, : model.dim] = xphys.reshape(-1, model.dim)
        for name, field in fields:
            arr = _wrap(field).evaluate(ctx)
            nc, nq = ctx.num_cells, ctx.num_points
            vs = arr.shape[4:]
            full = np.broadcast_to(arr, (nc, 1, 1, nq) + vs).reshape((nc * nq,) + vs)
            if data[name] is None:
                data[name] = np.zeros((nent * npc,) + vs)
            data[name][rows] = full

    lines = [
        "# vtk DataFile Version 3.0",
        "cartfem output",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {nent * npc} double",
    ]
    for p in points:
        lines.append(" ".join(_fmt(v) for v in p))
    lines.append(f"CELLS {nent} {nent * (npc + 1)}")
    for c in range(nent):
        ids = " ".join(str(c * npc + j) for j in range(npc))
        lines.append(f"{npc} {ids}")
    lines.append(f"CELL_TYPES {nent}")
    ctype = _CELL_TYPE[entry_dim]
    lines.extend(str(ctype) for _ in range(nent))
    if fields:
        lines.append(f"POINT_DATA {nent * npc}")
    for name, _ in fields:
        arr = data[name]
        vs = arr.shape[1:]
        if vs == ():
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(v) for v in arr)
        elif len(vs) == 1:
            lines.append(f"VECTORS {name} double")
            padded = np.zeros((len(arr), 3))
            padded[:, : vs[0]] = arr
            lines.extend(" ".join(_fmt(v) for v in row) for row in padded)
        elif len(vs) == 2:
            lines.append(f"TENSORS {name} double")
            padded = np.zeros((len(arr), 3, 3))
            padded[:, : vs[0], : vs[1]] = arr
            lines.extend(
                "\n".join(" ".join(_fmt(v) for v in r) for r in t) for t in padded
            )
        else:
            raise TypeError(f"cannot write field {name!r} with value shape {vs}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_vtk(path):
    """Minimal legacy VTK reader matching :func:`write_vtk` output.

    Returns a dict with 'points', 'cells', 'cell_types' and 'point_data'.
    """
    with open(path) as f:
        tokens_by_line = [line.split() for line in f]
    flat = [t for line in tokens_by_line for t in line]
    out = {"point_data": {}}
    i = 0

    def expect(word):
        nonlocal i
        if flat[i].upper() != word:
            raise ValueError(f"expected {word}, found {flat[i]!r}")
        i += 1

    while i < len(flat) and flat[i].upper() != "POINTS":
        i += 1
    expect("POINTS")
    npts = int(flat[i]); i += 2  # count, dtype
    pts = np.array(flat[i : i + 3 * npts], dtype=float).reshape(npts, 3)
    i += 3 * npts
    out["points"] = pts
    expect("CELLS")
    ncell = int(flat[i]); total = int(flat[i + 1]); i += 2
    raw = np.array(flat[i : i + total], dtype=np.int64)
    i += total
    cells = []
    j = 0
    for _ in range(ncell):
        k = int(raw[j])
        cells.append(raw[j + 1 : j + 1 + k].copy())
        j += k + 1
    out["cells"] = cells
    expect("CELL_TYPES")
    n = int(flat[i]); i += 1
    out["cell_types"] = np.array(flat[i : i + n], dtype=np.int64)
    i += n
    if i < len(flat) and flat[i].upper() == "POINT_DATA":
        i += 2
        while i < len(flat):
            kind = flat[i].upper()
            if kind == "SCALARS":
                name = flat[i + 1]; i += 4  # SCALARS name dtype ncomp
                expect("LOOKUP_TABLE"); i += 1
                out["point_data"][name] = np.array(flat[i : i + npts], dtype=float)
                i += npts
            elif kind == "VECTORS":
                name = flat[i + 1]; i += 3
                out["point_data"][name] = np.array(
                    flat[i : i + 3 * npts], dtype=float
                ).reshape(npts, 3)
                i += 3 * npts
            elif kind == "TENSORS":
                name = flat[i + 1]; i += 3
                out["point_data"][name] = np.array(
                    flat[i : i + 9 * npts], dtype=float
                ).reshape(npts, 3, 3)
                i += 9 * npts
            else:
                raise ValueError(f"unsupported point data kind {kind!r}")
    return out
