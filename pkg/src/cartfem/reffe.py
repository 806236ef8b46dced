"""Reference elements on the unit cell [0,1]^d and Gauss quadrature rules.

Three element families are provided:

* ``QLagrangian``: tensor-product nodal Lagrange elements (scalar or vector
  valued), usable with H1 (order >= 1) or L2 conformity. Nodes follow the
  lexicographic lattice with the x axis fastest.
* ``PLagrangian``: total-degree polynomials with nodes on an interior
  principal lattice, discontinuous only. The nodal basis is obtained by
  inverting the Vandermonde matrix, so no inter-cell node ordering contract
  is needed.
* ``RaviartThomas``: lowest-order H(div) element on quads/hexes, one flux
  degree of freedom per facet. Dof functionals are facet integrals of the
  normal component taken along the fixed +axis direction, which makes all
  inter-cell orientation signs +1 on axis-aligned meshes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

__all__ = [
    "H1",
    "HDIV",
    "L2",
    "PLagrangian",
    "QLagrangian",
    "QuadratureRule",
    "RaviartThomas",
    "gauss_rule",
    "piola_divergence",
    "piola_map",
    "reference_element",
    "shape_gradients",
    "shape_values",
]

H1 = "H1"
L2 = "L2"
HDIV = "HDiv"


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor-product quadrature on [0,1]^d exact to ``degree`` per axis."""

    points: np.ndarray  # (n, d)
    weights: np.ndarray  # (n,)
    degree: int

    @property
    def num_points(self):
        return self.points.shape[0]


def gauss_rule(dim, degree):
    """Gauss-Legendre rule on [0,1]^dim integrating per-axis degree ``degree``.

    Uses ceil((degree+1)/2) points per axis; points are ordered with the
    first axis fastest. ``dim == 0`` yields the single-point rule used for
    the facets of 1D meshes.
    """
    if degree < 0:
        raise ValueError(f"quadrature degree must be >= 0, got {degree}")
    if dim == 0:
        return QuadratureRule(np.zeros((1, 0)), np.ones(1), degree)
    n1 = (degree + 2) // 2
    x, w = np.polynomial.legendre.leggauss(n1)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    pts = np.stack([g.ravel(order="F") for g in grids], axis=1)
    wts = np.ones(len(pts))
    for a in range(dim):
        wts *= w[np.unravel_index(np.arange(len(pts)), (n1,) * dim, order="F")[a]]
    return QuadratureRule(pts, wts, degree)


def _lagrange_1d(nodes, pts):
    """Values and derivatives of the 1D Lagrange basis at ``pts``.

    Returns (val, der) with shape (len(nodes), len(pts)).
    """
    nodes = np.asarray(nodes, dtype=float)
    pts = np.asarray(pts, dtype=float)
    k = len(nodes)
    val = np.ones((k, len(pts)))
    der = np.zeros((k, len(pts)))
    if k == 1:
        return val, der
    for i in range(k):
        for m in range(k):
            if m == i:
                continue
            val[i] *= (pts - nodes[m]) / (nodes[i] - nodes[m])
        for n in range(k):
            if n == i:
                continue
            term = np.full(len(pts), 1.0 / (nodes[i] - nodes[n]))
            for m in range(k):
                if m in (i, n):
                    continue
                term *= (pts - nodes[m]) / (nodes[i] - nodes[m])
            der[i] += term
    return val, der


class QLagrangian:
    """Tensor-product Lagrange element of the given order.

    ``ncomp > 1`` builds the vector-valued element whose dofs are
    (node, component) pairs with the component index fastest.
    """

    family = "Q"

    def __init__(self, dim, order, ncomp=1):
        if order < 0:
            raise ValueError("order must be >= 0")
        self.dim = dim
        self.order = order
        self.ncomp = ncomp
        self.value_shape = () if ncomp == 1 else (ncomp,)
        if order == 0:
            self.nodes_1d = np.array([0.5])
        else:
            self.nodes_1d = np.linspace(0.0, 1.0, order + 1)
        k = len(self.nodes_1d)
        self.num_scalar_dofs = k**dim
        self.num_dofs = self.num_scalar_dofs * ncomp
        idx = np.unravel_index(np.arange(self.num_scalar_dofs), (k,) * dim, order="F")
        self.nodes = np.stack([self.nodes_1d[i] for i in idx], axis=1)
        # per-axis position codes: 0 at the low end, 1 at the high end, 2 inside
        codes = np.full((self.num_scalar_dofs, dim), 2, dtype=np.int8)
        if order >= 1:
            for a in range(dim):
                codes[idx[a] == 0, a] = 0
                codes[idx[a] == order, a] = 1
        self.node_codes = codes

    def conformities(self):
        return (H1, L2) if self.order >= 1 else (L2,)

    def scalar_values(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        k = len(self.nodes_1d)
        per_axis = [_lagrange_1d(self.nodes_1d, pts[:, a])[0] for a in range(self.dim)]
        idx = np.unravel_index(np.arange(self.num_scalar_dofs), (k,) * self.dim, order="F")
        out = np.ones((self.num_scalar_dofs, len(pts)))
        for a in range(self.dim):
            out *= per_axis[a][idx[a]]
        return out

    def scalar_gradients(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        k = len(self.nodes_1d)
        vals, ders = [], []
        for a in range(self.dim):
            v, d = _lagrange_1d(self.nodes_1d, pts[:, a])
            vals.append(v)
            ders.append(d)
        idx = np.unravel_index(np.arange(self.num_scalar_dofs), (k,) * self.dim, order="F")
        out = np.empty((self.num_scalar_dofs, len(pts), self.dim))
        for b in range(self.dim):
            g = np.ones((self.num_scalar_dofs, len(pts)))
            for a in range(self.dim):
                g *= (ders if a == b else vals)[a][idx[a]]
            out[:, :, b] = g
        return out

    def values(self, pts):
        """(ndof, npts, *value_shape) basis values."""
        sval = self.scalar_values(pts)
        if self.ncomp == 1:
            return sval
        n, npts = sval.shape
        out = np.zeros((n * self.ncomp, npts, self.ncomp))
        for c in range(self.ncomp):
            out[c :: self.ncomp, :, c] = sval
        return out

    def gradients(self, pts):
        """(ndof, npts, *value_shape, dim) basis gradients, Jacobian layout."""
        sgrad = self.scalar_gradients(pts)
        if self.ncomp == 1:
            return sgrad
        n, npts, d = sgrad.shape
        out = np.zeros((n * self.ncomp, npts, self.ncomp, d))
        for c in range(self.ncomp):
            out[c :: self.ncomp, :, c, :] = sgrad
        return out


class PLagrangian:
    """Nodal basis spanning total-degree <= order polynomials (discontinuous).

    Nodes sit on the principal simplex lattice shrunk into the cell interior;
    the basis is recovered by Vandermonde inversion.
    """

    family = "P"

    def __init__(self, dim, order):
        if order < 0:
            raise ValueError("order must be >= 0")
        self.dim = dim
        self.order = order
        self.ncomp = 1
        self.value_shape = ()
        exps = sorted(
            (
                alpha
                for alpha in itertools.product(range(order + 1), repeat=dim)
                if sum(alpha) <= order
            ),
            key=lambda a: (sum(a), tuple(reversed(a))),
        )
        self.exponents = np.array(exps, dtype=np.int64)
        self.num_dofs = len(exps)
        self.num_scalar_dofs = self.num_dofs
        assert self.num_dofs == comb(order + dim, dim)
        if order == 0:
            self.nodes = np.full((1, dim), 0.5)
        else:
            self.nodes = 0.25 + 0.5 * self.exponents / order
        V = self._monomials(self.nodes)  # (nnodes, nmono)
        self.coeffs = np.linalg.inv(V).T  # basis i = sum_j coeffs[i, j] * mono_j
        self.node_codes = np.full((self.num_dofs, dim), 2, dtype=np.int8)

    def conformities(self):
        return (L2,)

    def _monomials(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.ones((len(pts), self.num_dofs))
        for j, alpha in enumerate(self.exponents):
            for a in range(self.dim):
                out[:, j] *= pts[:, a] ** alpha[a]
        return out

    def _monomial_gradients(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros((len(pts), self.num_dofs, self.dim))
        for j, alpha in enumerate(self.exponents):
            for b in range(self.dim):
                if alpha[b] == 0:
                    continue
                g = np.full(len(pts), float(alpha[b]))
                for a in range(self.dim):
                    e = alpha[a] - (1 if a == b else 0)
                    g *= pts[:, a] ** e
                out[:, j, b] = g
        return out

    def values(self, pts):
        return self.coeffs @ self._monomials(pts).T

    def gradients(self, pts):
        mg = self._monomial_gradients(pts)
        return np.einsum("ij,pjb->ipb", self.coeffs, mg)


class RaviartThomas:
    """Lowest-order Raviart-Thomas element on the reference quad/hex.

    The flux space is Q_(1,0) x Q_(0,1) in 2D (and its 3D analogue): component
    a is linear in x_a and constant in the other axes, so every basis
    divergence is constant. Dofs are facet fluxes along the +axis direction,
    one per facet, ordered like the local facets of the mesh (normal axis
    descending, low side before high side).
    """

    family = "RT"

    def __init__(self, dim, order=0):
        if order != 0:
            raise NotImplementedError(
                "only the lowest-order Raviart-Thomas element is implemented"
            )
        self.dim = dim
        self.order = order
        self.ncomp = dim
        self.value_shape = (dim,)
        self.num_dofs = 2 * dim
        # dof -> (normal axis, side); same ordering as CartesianModel.local_facet
        self.dof_facets = [
            (axis, side) for axis in range(dim - 1, -1, -1) for side in (0, 1)
        ]

    def conformities(self):
        return (HDIV,)

    def values(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros((self.num_dofs, len(pts), self.dim))
        for i, (axis, side) in enumerate(self.dof_facets):
            out[i, :, axis] = pts[:, axis] if side == 1 else 1.0 - pts[:, axis]
        return out

    def divergences(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros((self.num_dofs, len(pts)))
        for i, (axis, side) in enumerate(self.dof_facets):
            out[i, :] = 1.0 if side == 1 else -1.0
        return out

    def gradients(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros((self.num_dofs, len(pts), self.dim, self.dim))
        for i, (axis, side) in enumerate(self.dof_facets):
            out[i, :, axis, axis] = 1.0 if side == 1 else -1.0
        return out


def reference_element(family, dim, order, ncomp=1):
    """Element factory: family is 'Q', 'P' or 'RT'."""
    if family == "Q":
        return QLagrangian(dim, order, ncomp)
    if family == "P":
        if ncomp != 1:
            raise ValueError("PLagrangian elements are scalar valued")
        return PLagrangian(dim, order)
    if family == "RT":
        return RaviartThomas(dim, order)
    raise ValueError(f"unknown element family {family!r}")


def shape_values(elem, pts):
    """Basis values at reference points (ndof, npts, *value_shape)."""
    return elem.values(pts)


def shape_gradients(elem, pts):
    """Basis gradients at reference points (ndof, npts, *value_shape, dim)."""
    return elem.gradients(pts)


def piola_map(jac_diag, ref_vals):
    """Contravariant Piola transform for a diagonal cell Jacobian.

    v = (1/det J) J vhat, acting on the trailing component axis of
    ``ref_vals``. Raises on singular Jacobians.
    """
    jac_diag = np.asarray(jac_diag, dtype=float)
    det = float(np.prod(jac_diag))
    if det <= 0.0 or not np.all(jac_diag > 0):
        raise ValueError(f"cell Jacobian must be positive, got diag {jac_diag}")
    return ref_vals * (jac_diag / det)


def piola_divergence(jac_diag, ref_divs):
    """Physical divergence under the Piola transform: div v = (1/det J) divhat."""
    jac_diag = np.asarray(jac_diag, dtype=float)
    det = float(np.prod(jac_diag))
    if det <= 0.0 or not np.all(jac_diag > 0):
        raise ValueError(f"cell Jacobian must be positive, got diag {jac_diag}")
    return ref_divs / det
