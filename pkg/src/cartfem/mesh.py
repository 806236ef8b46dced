"""Structured Cartesian meshes with deterministic boundary labeling.

A model is an axis-aligned box split into a regular grid of quadrilateral or
hexahedral cells (arbitrary dimension for construction, 2D/3D for solves).
Every geometric face of every dimension (vertex, edge, facet, cell) carries
exactly one small integer "entity" id, and named tags resolve to sets of
entity ids. The entity numbering is fixed by construction:

* entities are grouped by the number of "free" axes: corners first, then
  edges, then facets, ..., interior last;
* within a group, free-axis combinations are enumerated lexicographically,
  and the fixed axes take their low/high ends with the first fixed axis
  varying fastest.

In 2D this yields corners 1:(x0,y0) 2:(x1,y0) 3:(x0,y1) 4:(x1,y1), edges
5:bottom 6:top 7:left 8:right, interior 9. In 3D: corners 1..8, edges 9..20,
faces 21..26 (z0,z1,y0,y1,x0,x1), interior 27.

Vertex, cell and face numbering is lexicographic with the x axis fastest.
Models and labelings are immutable after construction; adding a tag returns
a new labeling value.
"""

from __future__ import annotations

import itertools
from math import prod

import numpy as np

__all__ = [
    "CartesianModel",
    "FaceLabeling",
    "MeshFormatError",
    "add_tag_from_tags",
    "cartesian_model",
    "read_model",
    "write_model",
]


class MeshFormatError(ValueError):
    """Raised when a native mesh file is malformed; carries line context."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


def _axis_combos(dim, nfree):
    return list(itertools.combinations(range(dim), nfree))


class _EntityScheme:
    """Canonical entity numbering for the boundary decomposition of a box.

    An entity is an assignment of a code to every axis: 0 (pinned at the low
    end), 1 (pinned at the high end) or 2 (free). Ids are 1-based; the
    all-free assignment (the interior) is numbered last and equals 3**dim.
    """

    def __init__(self, dim):
        self.dim = dim
        assignments = []
        for nfree in range(dim + 1):
            for combo in _axis_combos(dim, nfree):
                fixed = [a for a in range(dim) if a not in combo]
                for bits in range(2 ** len(fixed)):
                    codes = [2] * dim
                    for j, a in enumerate(fixed):
                        codes[a] = (bits >> j) & 1
                    assignments.append(tuple(codes))
        self.assignments = assignments
        lut = np.zeros(3**dim, dtype=np.int32)
        for eid, codes in enumerate(assignments, start=1):
            key = sum(c * 3**a for a, c in enumerate(codes))
            lut[key] = eid
        self._lut = lut

    @property
    def num_entities(self):
        return 3**self.dim

    @property
    def interior_id(self):
        return 3**self.dim

    def ids_from_codes(self, codes):
        """Vectorized lookup: codes is an (n, dim) array with values 0/1/2."""
        key = codes @ (3 ** np.arange(self.dim))
        return self._lut[key]

    def closure_of_side(self, axis, end):
        """Entity ids of the closed box side ``x_axis == end`` (0 low, 1 high)."""
        out = []
        for eid, codes in enumerate(self.assignments, start=1):
            if codes[axis] == end:
                out.append(eid)
        return out


class FaceLabeling:
    """Per-face entity ids for each dimension plus a tag table.

    ``entities[m]`` assigns one entity id to each m-dimensional face of the
    model. Tags map names to frozen sets of entity ids; a tag resolves to all
    faces whose entity id is in its set. Instances are immutable: use
    :func:`add_tag_from_tags` (or :meth:`with_tag`) to derive new labelings.
    """

    def __init__(self, dim, entities, tags):
        self.dim = dim
        self.entities = tuple(np.asarray(e, dtype=np.int32) for e in entities)
        for e in self.entities:
            e.setflags(write=False)
        self.tags = dict(tags)

    def tag_names(self):
        return list(self.tags)

    def known_entity_ids(self):
        """Set of entity ids actually assigned to at least one face."""
        ids = set()
        for e in self.entities:
            ids.update(int(v) for v in np.unique(e))
        return ids

    def resolve(self, tags):
        """Resolve a tag name, an entity id, or a sequence of those to an id set.

        Unknown tag names raise ``KeyError``; integer sources are accepted
        verbatim provided some face carries that entity id.
        """
        if isinstance(tags, (str, int, np.integer)):
            tags = [tags]
        known = None
        out = set()
        for t in tags:
            if isinstance(t, str):
                if t not in self.tags:
                    raise KeyError(
                        f"unknown tag {t!r}; known tags: {sorted(self.tags)}"
                    )
                out.update(self.tags[t])
            elif isinstance(t, (int, np.integer)):
                if known is None:
                    known = self.known_entity_ids()
                if int(t) not in known:
                    raise KeyError(f"unknown entity id {int(t)}")
                out.add(int(t))
            else:
                raise TypeError(f"tag source must be str or int, got {type(t)!r}")
        return frozenset(out)

    def with_tag(self, name, sources):
        """Return a copy of this labeling with ``name`` added to the tag table."""
        if name in self.tags:
            raise ValueError(f"tag {name!r} already exists")
        entity_ids = self.resolve(sources)
        tags = dict(self.tags)
        tags[name] = entity_ids
        return FaceLabeling(self.dim, self.entities, tags)

    def face_mask(self, dim, entity_ids):
        """Boolean mask over dim-faces whose entity id lies in ``entity_ids``."""
        return np.isin(self.entities[dim], np.fromiter(entity_ids, dtype=np.int32))

    def __eq__(self, other):
        if not isinstance(other, FaceLabeling):
            return NotImplemented
        return (
            self.dim == other.dim
            and all(np.array_equal(a, b) for a, b in zip(self.entities, other.entities))
            and self.tags == other.tags
        )


def add_tag_from_tags(labels, new_tag, sources):
    """Create a tag as the union of existing tags and/or entity ids.

    Returns an updated :class:`FaceLabeling`; the input is left untouched.
    """
    return labels.with_tag(new_tag, sources)


class CartesianModel:
    """d-dimensional Cartesian cell complex over an axis-aligned box.

    Exposes vertex coordinates, cell connectivity, the face lattice of every
    intermediate dimension with cell-to-face incidence, and a
    :class:`FaceLabeling`. All arrays are read-only.
    """

    def __init__(self, lo, hi, partition, labels=None):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        partition = tuple(int(n) for n in partition)
        dim = len(partition)
        if not 1 <= dim <= 4:
            raise ValueError(f"dimension must be between 1 and 4, got {dim}")
        if lo.shape != (dim,) or hi.shape != (dim,):
            raise ValueError("box limits must provide two scalars per axis")
        if any(n < 1 for n in partition):
            raise ValueError(f"partition entries must be >= 1, got {partition}")
        if not np.all(hi > lo):
            raise ValueError("box extents must be positive on every axis")

        self.dim = dim
        self.lo = lo
        self.hi = hi
        self.partition = partition
        self.h = (hi - lo) / np.asarray(partition, dtype=float)
        self.num_cells = prod(partition)
        self.num_vertices = prod(n + 1 for n in partition)
        self._scheme = _EntityScheme(dim)

        # Face lattice bookkeeping: for each dimension m, the list of free-axis
        # combinations with their grid shapes and id offsets.
        self._combos = {}
        self._shapes = {}
        self._offsets = {}
        for m in range(dim + 1):
            combos = _axis_combos(dim, m)
            shapes = []
            offsets = [0]
            for S in combos:
                shape = tuple(
                    partition[a] if a in S else partition[a] + 1 for a in range(dim)
                )
                shapes.append(shape)
                offsets.append(offsets[-1] + prod(shape))
            self._combos[m] = combos
            self._shapes[m] = shapes
            self._offsets[m] = offsets

        self.vertex_coords = self._build_vertex_coords()
        self.vertex_coords.setflags(write=False)
        self._cell_faces = {m: self._build_cell_faces(m) for m in range(dim + 1)}
        for arr in self._cell_faces.values():
            arr.setflags(write=False)
        self.cells = self._cell_faces[0]

        if labels is None:
            entities = [self._default_entities(m) for m in range(dim + 1)]
            tags = {
                "boundary": frozenset(range(1, self._scheme.num_entities)),
                "interior": frozenset([self._scheme.interior_id]),
            }
            labels = FaceLabeling(dim, entities, tags)
        self.labels = labels

    # -- construction helpers -------------------------------------------------

    def _build_vertex_coords(self):
        axes = [
            np.linspace(self.lo[a], self.hi[a], self.partition[a] + 1)
            for a in range(self.dim)
        ]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel(order="F") for g in grids], axis=1)

    def _build_cell_faces(self, m):
        cids = np.arange(self.num_cells)
        cidx = np.unravel_index(cids, self.partition, order="F")
        nloc = len(self._combos[m]) * 2 ** (self.dim - m)
        out = np.empty((self.num_cells, nloc), dtype=np.int64)
        loc = 0
        for ci, S in enumerate(self._combos[m]):
            fixed = [a for a in range(self.dim) if a not in S]
            shape = self._shapes[m][ci]
            offset = self._offsets[m][ci]
            for bits in range(2 ** len(fixed)):
                idx = list(cidx)
                for j, a in enumerate(fixed):
                    if (bits >> j) & 1:
                        idx[a] = cidx[a] + 1
                out[:, loc] = offset + np.ravel_multi_index(idx, shape, order="F")
                loc += 1
        return out

    def _default_entities(self, m):
        parts = []
        for ci, S in enumerate(self._combos[m]):
            shape = self._shapes[m][ci]
            count = prod(shape)
            idx = np.unravel_index(np.arange(count), shape, order="F")
            codes = np.empty((count, self.dim), dtype=np.int64)
            for a in range(self.dim):
                if a in S:
                    codes[:, a] = 2
                else:
                    c = np.full(count, 2, dtype=np.int64)
                    c[idx[a] == 0] = 0
                    c[idx[a] == self.partition[a]] = 1
                    codes[:, a] = c
            parts.append(self._scheme.ids_from_codes(codes))
        return np.concatenate(parts)

    # -- queries ---------------------------------------------------------------

    def num_faces(self, m):
        """Number of m-dimensional faces (m = dim counts the cells)."""
        return self._offsets[m][-1]

    def cell_faces(self, m):
        """(num_cells, nloc) incidence: local faces ordered by free-axis combo,
        then by the fixed-end bits with the first fixed axis fastest."""
        return self._cell_faces[m]

    def face_vertices(self, m):
        """(num_faces, 2**m) corner vertex ids of each m-face, ascending."""
        nfaces = self.num_faces(m)
        vshape = tuple(n + 1 for n in self.partition)
        out = np.empty((nfaces, 2**m), dtype=np.int64)
        for ci, S in enumerate(self._combos[m]):
            shape = self._shapes[m][ci]
            offset = self._offsets[m][ci]
            count = prod(shape)
            idx = np.unravel_index(np.arange(count), shape, order="F")
            for corner in range(2**m):
                vidx = list(idx)
                for j, a in enumerate(S):
                    if (corner >> j) & 1:
                        vidx[a] = idx[a] + 1
                out[offset : offset + count, corner] = np.ravel_multi_index(
                    vidx, vshape, order="F"
                )
        return out

    def facet_info(self):
        """Adjacency data for the (dim-1)-faces.

        Returns a dict of arrays over all facets: ``axis`` (normal axis),
        ``apos`` (grid position along that axis), ``lower_cell``/``upper_cell``
        (cell ids on the low/high side, -1 past the boundary).
        """
        m = self.dim - 1
        nf = self.num_faces(m)
        axis = np.empty(nf, dtype=np.int64)
        apos = np.empty(nf, dtype=np.int64)
        lower = np.full(nf, -1, dtype=np.int64)
        upper = np.full(nf, -1, dtype=np.int64)
        for ci, S in enumerate(self._combos[m]):
            (a,) = (b for b in range(self.dim) if b not in S)
            shape = self._shapes[m][ci]
            offset = self._offsets[m][ci]
            count = prod(shape)
            sl = slice(offset, offset + count)
            idx = list(np.unravel_index(np.arange(count), shape, order="F"))
            axis[sl] = a
            apos[sl] = idx[a]
            cidx = [i.copy() for i in idx]
            cidx[a] = idx[a] - 1
            ok = idx[a] > 0
            lower[sl] = np.where(
                ok,
                np.ravel_multi_index(
                    [np.where(ok, c, 0) for c in cidx], self.partition, order="F"
                ),
                -1,
            )
            cidx[a] = idx[a]
            ok = idx[a] < self.partition[a]
            upper[sl] = np.where(
                ok,
                np.ravel_multi_index(
                    [np.minimum(c, np.asarray(self.partition)[j] - 1) for j, c in enumerate(cidx)],
                    self.partition,
                    order="F",
                ),
                -1,
            )
        return {"axis": axis, "apos": apos, "lower_cell": lower, "upper_cell": upper}

    def local_facet(self, axis, high_side):
        """Local facet index of a cell for the facet with the given normal axis,
        on the cell's high (True) or low (False) side."""
        combo_idx = self.dim - 1 - axis
        return 2 * combo_idx + (1 if high_side else 0)

    def cell_origin(self, cell_ids):
        """Low corner coordinates of the given cells, shape (n, dim)."""
        cidx = np.unravel_index(np.asarray(cell_ids), self.partition, order="F")
        return self.lo + np.stack(cidx, axis=-1) * self.h

    def side_closure_entities(self, axis, end):
        """Entity ids covering the closed box side ``x_axis == lo/hi`` (end=0/1)."""
        return self._scheme.closure_of_side(axis, end)

    @property
    def interior_entity_id(self):
        return self._scheme.interior_id

    @property
    def num_entities(self):
        return self._scheme.num_entities

    def with_labels(self, labels):
        """Same geometry with a different labeling (used by tag addition)."""
        if labels.dim != self.dim:
            raise ValueError("labeling dimension mismatch")
        m = CartesianModel.__new__(CartesianModel)
        m.__dict__.update(self.__dict__)
        m.labels = labels
        return m


def cartesian_model(domain_box, partition):
    """Build a Cartesian model of the box ``(x0,x1, y0,y1, ...)``.

    ``partition`` gives the number of cells per axis. Boundary faces receive
    the canonical entity numbering described in the module docstring, and the
    tags ``"boundary"`` and ``"interior"`` are predefined.
    """
    partition = tuple(int(n) for n in partition)
    dim = len(partition)
    box = tuple(float(x) for x in domain_box)
    if len(box) != 2 * dim:
        raise ValueError(
            f"domain box needs {2 * dim} scalars for a {dim}D partition, got {len(box)}"
        )
    lo = box[0::2]
    hi = box[1::2]
    return CartesianModel(lo, hi, partition)


# -- native mesh file format ---------------------------------------------------
#
# Line-oriented text format:
#
#   cartfem-mesh 1
#   dim 2
#   box 0.0 1.0 0.0 1.0
#   partition 4 4
#   entity <dim> <face-id> <entity-id>     (one line per face, each exactly once)
#   tag <name>: <entity-id> ...
#
# Blank lines and lines starting with '#' are ignored. Entity assignments are
# written out in full so files are auditable and diffable; custom entity ids
# beyond the canonical ones are allowed as long as every face gets exactly one.


def write_model(model, path):
    """Write a model (geometry, entities and tags) to the native text format."""
    lines = ["cartfem-mesh 1", f"dim {model.dim}"]
    box = " ".join(
        f"{float(model.lo[a])!r} {float(model.hi[a])!r}" for a in range(model.dim)
    )
    lines.append(f"box {box}")
    lines.append("partition " + " ".join(str(n) for n in model.partition))
    for m in range(model.dim + 1):
        ents = model.labels.entities[m]
        for fid, eid in enumerate(ents):
            lines.append(f"entity {m} {fid} {int(eid)}")
    for name, ids in model.labels.tags.items():
        lines.append(f"tag {name}: " + " ".join(str(i) for i in sorted(ids)))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_model(path):
    """Read a model from the native text format; inverse of :func:`write_model`."""
    with open(path) as f:
        raw_lines = f.readlines()

    it = [
        (i + 1, line.strip())
        for i, line in enumerate(raw_lines)
        if line.strip() and not line.strip().startswith("#")
    ]
    if not it or it[0][1] != "cartfem-mesh 1":
        lineno = it[0][0] if it else 1
        raise MeshFormatError("expected header 'cartfem-mesh 1'", line=lineno)

    dim = None
    box = None
    partition = None
    entity_lines = []
    tag_lines = []
    for lineno, line in it[1:]:
        fields = line.split()
        kind = fields[0]
        if kind == "dim":
            if len(fields) != 2 or not fields[1].isdigit():
                raise MeshFormatError("malformed dim line", line=lineno)
            dim = int(fields[1])
        elif kind == "box":
            try:
                box = tuple(float(x) for x in fields[1:])
            except ValueError:
                raise MeshFormatError("malformed box line", line=lineno) from None
        elif kind == "partition":
            try:
                partition = tuple(int(x) for x in fields[1:])
            except ValueError:
                raise MeshFormatError("malformed partition line", line=lineno) from None
        elif kind == "entity":
            entity_lines.append((lineno, fields[1:]))
        elif kind == "tag":
            tag_lines.append((lineno, line))
        else:
            raise MeshFormatError(f"unknown directive {kind!r}", line=lineno)

    if dim is None or box is None or partition is None:
        raise MeshFormatError("missing dim/box/partition header")
    if len(partition) != dim or len(box) != 2 * dim:
        raise MeshFormatError("dim, box and partition are inconsistent")

    base = cartesian_model(box, partition)
    entities = [np.full(base.num_faces(m), -1, dtype=np.int32) for m in range(dim + 1)]
    for lineno, fields in entity_lines:
        if len(fields) != 3:
            raise MeshFormatError("entity line needs dim, face id and entity id", line=lineno)
        try:
            m, fid, eid = (int(x) for x in fields)
        except ValueError:
            raise MeshFormatError("entity line fields must be integers", line=lineno) from None
        if not 0 <= m <= dim:
            raise MeshFormatError(f"face dimension {m} out of range", line=lineno)
        if not 0 <= fid < base.num_faces(m):
            raise MeshFormatError(f"face id {fid} out of range for dim {m}", line=lineno)
        if eid < 1:
            raise MeshFormatError(f"entity id must be positive, got {eid}", line=lineno)
        if entities[m][fid] != -1:
            raise MeshFormatError(
                f"face {fid} of dim {m} assigned two entity ids", line=lineno
            )
        entities[m][fid] = eid
    for m in range(dim + 1):
        if np.any(entities[m] == -1):
            missing = int(np.argmax(entities[m] == -1))
            raise MeshFormatError(f"face {missing} of dim {m} has no entity id")

    known = set()
    for e in entities:
        known.update(int(v) for v in np.unique(e))
    tags = {}
    for lineno, line in tag_lines:
        body = line[len("tag") :].strip()
        if ":" not in body:
            raise MeshFormatError("tag line needs 'name: id id ...'", line=lineno)
        name, _, ids = body.partition(":")
        name = name.strip()
        if not name:
            raise MeshFormatError("empty tag name", line=lineno)
        if name in tags:
            raise MeshFormatError(f"duplicate tag {name!r}", line=lineno)
        try:
            id_set = frozenset(int(x) for x in ids.split())
        except ValueError:
            raise MeshFormatError("tag ids must be integers", line=lineno) from None
        unknown = sorted(i for i in id_set if i not in known)
        if unknown:
            raise MeshFormatError(
                f"tag {name!r} references nonexistent entity {unknown[0]}", line=lineno
            )
        tags[name] = id_set

    labels = FaceLabeling(dim, entities, tags)
    return base.with_labels(labels)
