"""Global finite element spaces on Cartesian models.

A space combines a reference element with a conformity class and produces
the cell-to-dof map, the free/constrained dof split and, through
:class:`TrialSpace`, the constrained dof values:

* H1: scalar dofs attached to the geometric faces of the mesh (vertices,
  edges, ...), shared between the cells containing the face;
* L2: cell-local dofs, no sharing;
* HDiv: one flux dof per facet, shared by both neighbours. Dof functionals
  point along the fixed +axis directions, so the inter-cell orientation
  sign is +1 everywhere on an axis-aligned grid (the sign array is kept for
  the general contract).

A dof is Dirichlet-constrained iff the entity id of its owning face belongs
to the tag's entity set; tags must therefore include corner/edge entities
explicitly when the closure is wanted. When several tags claim one dof the
tag listed last wins. Vector-valued spaces take per-tag component masks.

The optional zero-mean constraint removes the last raw dof from the free
set; after a solve the removed dof is recovered and the function shifted by
a constant so its integral vanishes.
"""

from __future__ import annotations

import numpy as np

from . import cellfield
from .cellfield import BasisField, integrate
from .geometry import cell_quadrature, triangulation
from .mesh import CartesianModel
from .reffe import H1, HDIV, L2, gauss_rule, reference_element

__all__ = [
    "FEFunction",
    "FESpace",
    "MultiFieldFunction",
    "MultiFieldSpace",
    "TrialSpace",
    "interpolate",
    "multifield",
    "test_space",
    "trial_space",
    "zero_mean_postshift",
]

_ZEROMEAN_TAG = -2
_FREE = -1


class FESpace:
    """Scalar, vector or H(div) finite element space with a free/constrained
    dof split. Immutable after construction."""

    def __init__(
        self,
        model,
        family,
        order,
        ncomp=1,
        conformity=H1,
        dirichlet_tags=None,
        dirichlet_masks=None,
        constraint=None,
        labels=None,
    ):
        if not isinstance(model, CartesianModel):
            raise TypeError("model must be a CartesianModel")
        self.model = model
        self.labels = labels if labels is not None else model.labels
        self.element = reference_element(family, model.dim, order, ncomp)
        self.family = self.element.family
        self.order = order
        self.conformity = conformity
        self.value_shape = self.element.value_shape
        self.ncomp = self.element.ncomp if family != "RT" else 1
        if conformity not in self.element.conformities():
            raise ValueError(
                f"{family} elements of order {order} do not support {conformity} conformity"
            )
        self.constraint = constraint
        if constraint not in (None, "zeromean"):
            raise ValueError(f"unknown constraint {constraint!r}")
        if constraint == "zeromean" and (conformity != L2 or self.ncomp != 1):
            raise ValueError("the zero-mean constraint applies to scalar L2 spaces")

        if family == "RT":
            self._build_rt()
        elif conformity == H1:
            self._build_h1()
        else:
            self._build_l2()
        self.cell_dofs.setflags(write=False)
        # orientation signs (all +1 on axis-aligned grids, see module docstring)
        self.cell_dof_signs = np.ones_like(self.cell_dofs, dtype=np.int8)

        self.dirichlet_tags = list(dirichlet_tags) if dirichlet_tags else []
        if dirichlet_masks is not None:
            if self.family == "RT":
                raise ValueError("component masks do not apply to flux dofs")
            if len(dirichlet_masks) != len(self.dirichlet_tags):
                raise ValueError("need one dirichlet mask per dirichlet tag")
            for m in dirichlet_masks:
                if len(m) != self.ncomp:
                    raise ValueError(
                        f"mask arity {len(m)} does not match {self.ncomp} components"
                    )
        self.dirichlet_masks = dirichlet_masks
        self._apply_constraints()

    # -- dof layout per conformity ------------------------------------------

    def _build_h1(self):
        model = self.model
        elem = self.element
        k = self.order
        dim = model.dim
        if k < 1:
            raise ValueError("H1 spaces need order >= 1")
        inner_per_dim = [(k - 1) ** m for m in range(dim + 1)]
        offsets = [0]
        for m in range(dim + 1):
            offsets.append(offsets[-1] + model.num_faces(m) * inner_per_dim[m])
        self._h1_offsets = offsets
        nscalar = offsets[-1]

        ncells = model.num_cells
        nloc = elem.num_scalar_dofs
        scal = np.empty((ncells, nloc), dtype=np.int64)
        from .mesh import _axis_combos  # combo ordering shared with the model

        combos_by_dim = {m: _axis_combos(dim, m) for m in range(dim + 1)}
        codes = elem.node_codes
        k1 = k + 1
        node_idx = np.unravel_index(np.arange(nloc), (k1,) * dim, order="F")
        for loc in range(nloc):
            c = codes[loc]
            S = tuple(a for a in range(dim) if c[a] == 2)
            m = len(S)
            fixed = [a for a in range(dim) if a not in S]
            combo_idx = combos_by_dim[m].index(S)
            bits = 0
            for j, a in enumerate(fixed):
                bits |= int(c[a]) << j
            local_face = combo_idx * 2 ** len(fixed) + bits
            if m == 0:
                inner = 0
            else:
                pos = [int(node_idx[a][loc]) - 1 for a in S]
                inner = int(np.ravel_multi_index(pos, (k - 1,) * m, order="F"))
            faces = model.cell_faces(m)[:, local_face]
            scal[:, loc] = offsets[m] + faces * inner_per_dim[m] + inner
        self._finish_scalar_layout(scal, nscalar)
        self._scalar_geometry_h1()

    def _build_l2(self):
        elem = self.element
        nloc = elem.num_scalar_dofs
        ncells = self.model.num_cells
        scal = (np.arange(ncells)[:, None] * nloc + np.arange(nloc)[None, :]).astype(
            np.int64
        )
        self._finish_scalar_layout(scal, ncells * nloc)
        # every dof owned by its cell
        origins = self.model.cell_origin(np.arange(ncells))
        nodes = elem.nodes  # (nloc, dim)
        coords = origins[:, None, :] + nodes[None, :, :] * self.model.h
        self._scalar_coords = coords.reshape(-1, self.model.dim)
        self._scalar_entity = np.repeat(
            self.labels.entities[self.model.dim], nloc
        ).astype(np.int64)

    def _finish_scalar_layout(self, scal, nscalar):
        self.num_scalar_dofs = nscalar
        self._scalar_cell_dofs = scal
        ncomp = self.ncomp
        if ncomp == 1:
            self.cell_dofs = scal.copy()
            self.num_raw_dofs = nscalar
        else:
            ncells, nloc = scal.shape
            vec = np.empty((ncells, nloc * ncomp), dtype=np.int64)
            for c in range(ncomp):
                vec[:, c::ncomp] = scal * ncomp + c
            self.cell_dofs = vec
            self.num_raw_dofs = nscalar * ncomp

    def _scalar_geometry_h1(self):
        """Canonical coordinates and entity id of every scalar dof."""
        model = self.model
        k = self.order
        dim = model.dim
        coords = np.empty((self.num_scalar_dofs, dim))
        entity = np.empty(self.num_scalar_dofs, dtype=np.int64)
        from .mesh import _axis_combos

        pos = 0
        for m in range(dim + 1):
            ents = self.labels.entities[m]
            inner_count = (k - 1) ** m
            if inner_count == 0:
                continue
            combos = _axis_combos(dim, m)
            foffset = 0
            for S in combos:
                shape = tuple(
                    model.partition[a] if a in S else model.partition[a] + 1
                    for a in range(dim)
                )
                count = int(np.prod(shape))
                fidx = np.unravel_index(np.arange(count), shape, order="F")
                base = np.empty((count, dim))
                for a in range(dim):
                    base[:, a] = model.lo[a] + fidx[a] * model.h[a]
                if m == 0:
                    inner_offsets = np.zeros((1, dim))
                else:
                    lattice = np.unravel_index(
                        np.arange(inner_count), (k - 1,) * m, order="F"
                    )
                    inner_offsets = np.zeros((inner_count, dim))
                    for j, a in enumerate(S):
                        inner_offsets[:, a] = (lattice[j] + 1) / k * model.h[a]
                block = base[:, None, :] + inner_offsets[None, :, :]
                n = count * inner_count
                coords[pos : pos + n] = block.reshape(n, dim)
                entity[pos : pos + n] = np.repeat(
                    ents[foffset : foffset + count], inner_count
                )
                foffset += count
                pos += n
        assert pos == self.num_scalar_dofs
        self._scalar_coords = coords
        self._scalar_entity = entity

    def _build_rt(self):
        model = self.model
        if self.conformity != HDIV:
            raise ValueError("Raviart-Thomas spaces are HDiv conforming")
        nfacets = model.num_faces(model.dim - 1)
        self.cell_dofs = model.cell_faces(model.dim - 1).astype(np.int64).copy()
        self.num_raw_dofs = nfacets
        self.num_scalar_dofs = nfacets
        self._scalar_cell_dofs = self.cell_dofs
        self._scalar_entity = self.labels.entities[model.dim - 1].astype(np.int64)
        info = model.facet_info()
        self._facet_axis = info["axis"]
        self._facet_apos = info["apos"]

    # -- constraints -----------------------------------------------------------

    def _apply_constraints(self):
        nraw = self.num_raw_dofs
        claimed = np.full(nraw, _FREE, dtype=np.int64)
        for ti, tag in enumerate(self.dirichlet_tags):
            ids = self.labels.resolve(tag)
            on_tag = np.isin(self._scalar_entity, np.fromiter(ids, dtype=np.int64))
            if self.ncomp == 1 or self.family == "RT":
                claimed[np.nonzero(on_tag)[0]] = ti
            else:
                mask = (
                    self.dirichlet_masks[ti]
                    if self.dirichlet_masks is not None
                    else (True,) * self.ncomp
                )
                snodes = np.nonzero(on_tag)[0]
                for c in range(self.ncomp):
                    if mask[c]:
                        claimed[snodes * self.ncomp + c] = ti

        if self.constraint == "zeromean":
            if claimed[nraw - 1] != _FREE:
                raise ValueError("zero-mean constraint clashes with a dirichlet tag")
            claimed[nraw - 1] = _ZEROMEAN_TAG

        self.dof_index = np.empty(nraw, dtype=np.int64)
        free = claimed == _FREE
        self.free_to_raw = np.nonzero(free)[0]
        self.constrained_to_raw = np.nonzero(~free)[0]
        self.dof_index[free] = np.arange(len(self.free_to_raw))
        self.dof_index[~free] = -1 - np.arange(len(self.constrained_to_raw))
        self.constrained_tag_idx = claimed[self.constrained_to_raw]
        self.num_free_dofs = int(len(self.free_to_raw))
        self.num_constrained_dofs = int(len(self.constrained_to_raw))
        self.num_dirichlet_dofs = int(np.count_nonzero(self.constrained_tag_idx >= 0))

    # -- helpers ----------------------------------------------------------------

    @property
    def bc_arity(self):
        """Component count of boundary data: flux dofs take vector data."""
        return self.model.dim if self.family == "RT" else self.ncomp

    def basis(self, role):
        """Basis placeholder field ('test' or 'trial') for weak forms."""
        return BasisField(self, role)

    def constrained_values_for(self, fns):
        """Constrained dof values for one boundary function per dirichlet tag.

        Lagrangian dofs interpolate the function at the dof node (masked
        components pick the matching entry); flux dofs take the facet moment
        of g . n with n the +axis unit vector. Zero-mean dofs get 0.
        """
        vals = np.zeros(self.num_constrained_dofs)
        for ti in range(len(self.dirichlet_tags)):
            sel = np.nonzero(self.constrained_tag_idx == ti)[0]
            if len(sel) == 0:
                continue
            fn = _normalize_bc(fns[ti], self.bc_arity)
            raw = self.constrained_to_raw[sel]
            if self.family == "RT":
                vals[sel] = self._facet_flux_moments(raw, fn)
            else:
                if self.ncomp == 1:
                    x = self._scalar_coords[raw]
                    vals[sel] = fn(x)[:, 0]
                else:
                    snode, comp = divmod(raw, self.ncomp)
                    x = self._scalar_coords[snode]
                    vals[sel] = fn(x)[np.arange(len(raw)), comp]
        return vals

    def _facet_flux_moments(self, facet_ids, fn):
        """Integral of g . e_axis over each facet, by Gauss quadrature."""
        model = self.model
        d = model.dim
        rule = gauss_rule(d - 1, max(2, 2 * (self.order + 1)))
        out = np.empty(len(facet_ids))
        info_axis = self._facet_axis[facet_ids]
        info_apos = self._facet_apos[facet_ids]
        verts = model.face_vertices(d - 1)
        for j, (fid, ax, ap) in enumerate(zip(facet_ids, info_axis, info_apos)):
            lo_corner = model.vertex_coords[verts[fid, 0]]
            tang = [a for a in range(d) if a != ax]
            pts = np.empty((rule.num_points, d))
            pts[:, ax] = lo_corner[ax]
            meas = 1.0
            for t, a in enumerate(tang):
                pts[:, a] = lo_corner[a] + rule.points[:, t] * model.h[a]
                meas *= model.h[a]
            gvals = fn(pts)
            out[j] = (gvals[:, ax] * rule.weights).sum() * meas
        return out


def _normalize_bc(g, arity):
    """Boundary data as a vectorized function x (n, d) -> (n, arity)."""
    if callable(g):
        def fn(x):
            out = np.asarray(g(x), dtype=float)
            if out.ndim == 1:
                out = out[:, None]
            if out.shape[-1] != arity:
                raise ValueError(
                    f"boundary data has {out.shape[-1]} components, expected {arity}"
                )
            return out

        return fn
    arr = np.broadcast_to(np.atleast_1d(np.asarray(g, dtype=float)), (arity,))
    return lambda x: np.broadcast_to(arr, (len(x), arity))


def test_space(
    model,
    family,
    order,
    ncomp=1,
    conformity=H1,
    dirichlet_tags=None,
    dirichlet_masks=None,
    constraint=None,
    labels=None,
):
    """Build a finite element space; see :class:`FESpace`."""
    return FESpace(
        model,
        family,
        order,
        ncomp=ncomp,
        conformity=conformity,
        dirichlet_tags=dirichlet_tags,
        dirichlet_masks=dirichlet_masks,
        constraint=constraint,
        labels=labels,
    )


class TrialSpace:
    """A space together with its constrained dof values.

    Boundary functions are passed in the same order as the space's
    dirichlet tags; a single function (or constant) applies to all tags.
    """

    def __init__(self, space, g=None):
        self.space = space
        ntags = len(space.dirichlet_tags)
        if g is None:
            fns = [0.0] * ntags
        elif isinstance(g, (list, tuple)) and not _is_constant_vector(g, space):
            fns = list(g)
            if len(fns) != ntags:
                raise ValueError(
                    f"got {len(fns)} boundary functions for {ntags} dirichlet tags"
                )
        else:
            fns = [g] * ntags
        self.dirichlet_values = space.constrained_values_for(fns)
        self.dirichlet_values.setflags(write=False)

    @property
    def num_free_dofs(self):
        return self.space.num_free_dofs

    def function(self, free_values):
        """FE function with the given free dof values and the trial's
        constrained values."""
        return FEFunction.from_free(self, free_values)

    def zero_function(self):
        return self.function(np.zeros(self.space.num_free_dofs))


def _is_constant_vector(g, space):
    """A tuple of numbers matching the data arity is one constant value."""
    return (
        space.bc_arity > 1
        and len(g) == space.bc_arity
        and all(isinstance(v, (int, float)) for v in g)
    )


def trial_space(space, g=None):
    return TrialSpace(space, g)


class FEFunction(cellfield.FEField):
    """Function in a finite element space, stored as raw dof values.

    Doubles as a field expression, so it can enter weak-form integrands and
    error integrands directly.
    """

    def __init__(self, space, raw_values, trial=None):
        self.space = space
        self.value_shape = space.value_shape
        self.raw_values = np.asarray(raw_values, dtype=float)
        if self.raw_values.shape != (space.num_raw_dofs,):
            raise ValueError("raw value vector has the wrong length")
        self.trial = trial
        self.fefun = self

    @classmethod
    def from_free(cls, trial, free_values):
        space = trial.space
        free_values = np.asarray(free_values, dtype=float)
        if free_values.shape != (space.num_free_dofs,):
            raise ValueError("free value vector has the wrong length")
        raw = np.empty(space.num_raw_dofs)
        raw[space.free_to_raw] = free_values
        raw[space.constrained_to_raw] = trial.dirichlet_values
        return cls(space, raw, trial=trial)

    @property
    def free_values(self):
        return self.raw_values[self.space.free_to_raw]

    def eval_at(self, points):
        """Point evaluation anywhere in the box (cells located by floor)."""
        model = self.space.model
        points = np.atleast_2d(np.asarray(points, dtype=float))
        rel = (points - model.lo) / model.h
        cidx = np.clip(rel.astype(np.int64), 0, np.asarray(model.partition) - 1)
        ref = rel - cidx
        cells = np.ravel_multi_index(tuple(cidx.T), model.partition, order="F")
        elem = self.space.element
        tables = elem.values(ref)  # (ndof, npts, *vs)
        if self.space.family == "RT":
            from .reffe import piola_map

            tables = piola_map(model.h, tables)
        dofs = self.space.cell_dofs[cells]  # (npts, ndof)
        vals = self.raw_values[dofs]
        return np.einsum("pi,ip...->p...", vals, tables)


def interpolate(space, fn):
    """FE interpolant of a function: nodal values for Lagrangian spaces,
    facet flux moments for H(div) spaces."""
    if isinstance(space, TrialSpace):
        space = space.space
    fnn = _normalize_bc(fn, space.bc_arity)
    raw = np.empty(space.num_raw_dofs)
    if space.family == "RT":
        raw[:] = space._facet_flux_moments(np.arange(space.num_raw_dofs), fnn)
    elif space.ncomp == 1:
        raw[:] = fnn(space._scalar_coords)[:, 0]
    else:
        vals = fnn(space._scalar_coords)  # (nscalar, ncomp)
        for c in range(space.ncomp):
            raw[c :: space.ncomp] = vals[:, c]
    return FEFunction(space, raw)


class MultiFieldSpace:
    """Ordered list of spaces sharing one block-concatenated free numbering."""

    def __init__(self, fields):
        if not fields:
            raise ValueError("multifield needs at least one space")
        self.fields = list(fields)
        sizes = [f.num_free_dofs for f in self.fields]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.num_free_dofs = int(self.offsets[-1])
        first = self._space_of(0)
        for i in range(len(self.fields)):
            if self._space_of(i).model is not first.model:
                raise ValueError("all fields must share one model")
        self.model = first.model

    def _space_of(self, i):
        f = self.fields[i]
        return f.space if isinstance(f, TrialSpace) else f

    @property
    def num_fields(self):
        return len(self.fields)

    def basis(self, role):
        """Per-field basis placeholders."""
        return tuple(self._space_of(i).basis(role) for i in range(self.num_fields))

    def function(self, free_values):
        """Multi-field function from a concatenated free vector (trial only)."""
        free_values = np.asarray(free_values, dtype=float)
        parts = []
        for i, f in enumerate(self.fields):
            if not isinstance(f, TrialSpace):
                raise TypeError("functions need trial spaces (constrained values)")
            sl = free_values[self.offsets[i] : self.offsets[i + 1]]
            parts.append(f.function(sl))
        return MultiFieldFunction(self, parts, free_values)

    def zero_function(self):
        return self.function(np.zeros(self.num_free_dofs))


def multifield(fields):
    return MultiFieldSpace(fields)


class MultiFieldFunction:
    """Solution of a multi-field problem; unpacks into per-field functions."""

    def __init__(self, mspace, parts, free_values):
        self.mspace = mspace
        self.parts = tuple(parts)
        self.free_values = np.asarray(free_values, dtype=float)

    def unpack(self):
        return self.parts

    def __iter__(self):
        return iter(self.parts)


def zero_mean_postshift(fh, trian=None, quad=None):
    """Shift a function by a constant so its domain integral vanishes.

    Valid for nodal bases (partition of unity): subtracting c from every dof
    subtracts the constant c from the function.
    """
    space = fh.space
    if trian is None:
        trian = triangulation(space.model)
    if quad is None:
        quad = cell_quadrature(trian, max(2, 2 * space.order))
    total = float(np.sum(integrate(fh, trian, quad)))
    measure = float(np.sum(integrate(cellfield.Constant(1.0), trian, quad)))
    shift = total / measure
    return FEFunction(space, fh.raw_values - shift, trial=fh.trial)
