"""Integration domains over a Cartesian model.

Three triangulations are provided: the interior cells, a tagged subset of
boundary facets, and the skeleton of interior facets. Facet domains are
organized into uniform groups (same normal axis and side) so that all
members of a group share one reference-coordinate embedding into their
owner cells; assembly and evaluation loop over groups.

Facet conventions on an axis-aligned grid:

* boundary normals are outward unit axis vectors;
* each skeleton facet stores (plus, minus) cells with the plus cell the one
  with the smaller id, and the normal points from plus into minus (always
  the +axis direction, since cell ids grow along every axis);
* the facet measure is the product of the mesh spacings along the
  tangential axes, and the facet diameter |F| is their maximum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .reffe import gauss_rule

__all__ = [
    "BoundaryTriangulation",
    "FacetGroup",
    "InteriorTriangulation",
    "SkeletonTriangulation",
    "boundary_triangulation",
    "cell_quadrature",
    "get_normal_vector",
    "skeleton_triangulation",
    "triangulation",
]


@dataclass
class FacetGroup:
    """Facets sharing one (axis, side) embedding; ``entries`` indexes the
    triangulation's facet list, ``cells``/``minus_cells`` the owner cells."""

    axis: int
    entries: np.ndarray
    cells: np.ndarray
    normal: np.ndarray
    side: int | None = None  # boundary only: 0 low, 1 high (owner side)
    minus_cells: np.ndarray | None = None  # skeleton only

    def embed(self, facet_pts, minus=False):
        """Map facet reference points (nq, d-1) into cell reference coords.

        Tangential axes keep their order; the normal axis is pinned to the
        facet's position inside the owner cell (1 on the plus/high side,
        0 on the minus/low side).
        """
        facet_pts = np.atleast_2d(facet_pts)
        nq = facet_pts.shape[0]
        d = facet_pts.shape[1] + 1
        out = np.empty((nq, d))
        tang = [a for a in range(d) if a != self.axis]
        for j, a in enumerate(tang):
            out[:, a] = facet_pts[:, j]
        if self.minus_cells is not None:
            out[:, self.axis] = 0.0 if minus else 1.0
        else:
            out[:, self.axis] = float(self.side)
        return out


class InteriorTriangulation:
    """All cells of the model with their constant diagonal affine maps."""

    kind = "interior"

    def __init__(self, model):
        self.model = model
        self.cells = np.arange(model.num_cells)
        self.detj = float(np.prod(model.h))
        if self.detj <= 0:
            raise ValueError("cell Jacobian must be positive")

    @property
    def num_entries(self):
        return len(self.cells)

    @property
    def integration_scale(self):
        return self.detj


class _FacetTriangulation:
    """Shared machinery for boundary and skeleton triangulations."""

    def __init__(self, model):
        self.model = model

    def _facet_geometry(self, axes):
        h = self.model.h
        d = self.model.dim
        tang = [np.array([h[a] for a in range(d) if a != ax]) for ax in range(d)]
        measure = np.array([float(np.prod(t)) if len(t) else 1.0 for t in tang])
        diameter = np.array([float(np.max(t)) if len(t) else 1.0 for t in tang])
        return measure[axes], diameter[axes]


class BoundaryTriangulation(_FacetTriangulation):
    """Facets restricted to the given tags (default: the whole boundary).

    Per facet: owner cell, local facet index, outward unit normal and
    measure. Groups collect facets with the same (axis, side).
    """

    kind = "boundary"

    def __init__(self, model, tags=None):
        super().__init__(model)
        info = model.facet_info()
        on_boundary = (info["lower_cell"] < 0) | (info["upper_cell"] < 0)
        if tags is None:
            selected = on_boundary
        else:
            ids = model.labels.resolve(tags)
            selected = model.labels.face_mask(model.dim - 1, ids)
            if np.any(selected & ~on_boundary):
                raise ValueError(
                    "boundary triangulation tags must resolve to boundary facets"
                )
        self.facets = np.nonzero(selected)[0]
        if len(self.facets) == 0:
            raise ValueError(f"tags {tags!r} resolve to no boundary facets")

        axis = info["axis"][self.facets]
        lower = info["lower_cell"][self.facets]
        upper = info["upper_cell"][self.facets]
        # facet at the owner's high side <=> there is no upper cell
        self.owner_cell = np.where(upper < 0, lower, upper)
        self.owner_side = (upper < 0).astype(np.int64)
        self.axis = axis
        self.normals = np.zeros((len(self.facets), model.dim))
        sign = np.where(self.owner_side == 1, 1.0, -1.0)
        self.normals[np.arange(len(self.facets)), axis] = sign
        self.measure, self.diameter = self._facet_geometry(axis)
        self.local_facet = np.array(
            [
                model.local_facet(a, s == 1)
                for a, s in zip(self.axis, self.owner_side)
            ],
            dtype=np.int64,
        )

        self.groups = []
        for lf in np.unique(self.local_facet):
            entries = np.nonzero(self.local_facet == lf)[0]
            a = int(self.axis[entries[0]])
            s = int(self.owner_side[entries[0]])
            normal = np.zeros(model.dim)
            normal[a] = 1.0 if s == 1 else -1.0
            self.groups.append(
                FacetGroup(
                    axis=a,
                    entries=entries,
                    cells=self.owner_cell[entries],
                    normal=normal,
                    side=s,
                )
            )

    @property
    def num_entries(self):
        return len(self.facets)


class SkeletonTriangulation(_FacetTriangulation):
    """Every facet shared by two cells, listed exactly once.

    The plus cell is the one with the smaller id; normals point from plus
    into minus. Groups collect facets by normal axis.
    """

    kind = "skeleton"

    def __init__(self, model):
        super().__init__(model)
        info = model.facet_info()
        interior = (info["lower_cell"] >= 0) & (info["upper_cell"] >= 0)
        self.facets = np.nonzero(interior)[0]
        self.axis = info["axis"][self.facets]
        # lexicographic cell ids grow along every axis: lower cell has the
        # smaller id, so it is the plus cell and the normal is +e_axis
        self.plus_cell = info["lower_cell"][self.facets]
        self.minus_cell = info["upper_cell"][self.facets]
        self.normals = np.zeros((len(self.facets), model.dim))
        self.normals[np.arange(len(self.facets)), self.axis] = 1.0
        self.measure, self.diameter = self._facet_geometry(self.axis)
        self.plus_local = np.array(
            [model.local_facet(a, True) for a in self.axis], dtype=np.int64
        )
        self.minus_local = np.array(
            [model.local_facet(a, False) for a in self.axis], dtype=np.int64
        )

        self.groups = []
        for a in np.unique(self.axis):
            entries = np.nonzero(self.axis == a)[0]
            normal = np.zeros(model.dim)
            normal[a] = 1.0
            self.groups.append(
                FacetGroup(
                    axis=int(a),
                    entries=entries,
                    cells=self.plus_cell[entries],
                    normal=normal,
                    minus_cells=self.minus_cell[entries],
                )
            )

    @property
    def num_entries(self):
        return len(self.facets)


def triangulation(model):
    """Integration domain over all cells."""
    return InteriorTriangulation(model)


def boundary_triangulation(model, tags=None):
    """Integration domain over tagged boundary facets (default: all).

    Raises if a tag resolves to no facet: silently skipping a mistyped
    boundary condition is a classic source of wrong results.
    """
    return BoundaryTriangulation(model, tags)


def skeleton_triangulation(model):
    """Integration domain over the interior facets."""
    return SkeletonTriangulation(model)


def cell_quadrature(trian, degree):
    """Gauss rule matching the reference dimension of the domain's entries."""
    d = trian.model.dim
    if trian.kind == "interior":
        return gauss_rule(d, degree)
    return gauss_rule(d - 1, degree)


def get_normal_vector(trian):
    """Unit normal field of a boundary or skeleton triangulation."""
    if trian.kind == "interior":
        raise TypeError("interior triangulations carry no normal vector")
    from .cellfield import NormalField

    return NormalField(trian)
