"""Lazy per-cell field algebra for weak-form integrands.

Fields are expression trees evaluated batch-wise at quadrature points. Every
evaluation returns an array broadcastable to ``(ncells, ntest, ntrial, nq,
*value_shape)``; plain fields occupy size-1 test/trial axes while basis
fields of the test (trial) space occupy the second (third) axis. The
combinator set is fixed: +, -, scalar multiplication, inner contraction,
matrix-vector product, transpose, trace, norm, powers of scalar fields, and
pointwise user laws.

Analytic functions must be numpy-vectorized: they receive coordinate arrays
of shape ``(..., dim)`` and return values with shape ``(...,) + value_shape``.
Gradients of analytic fields are never derived automatically; register them
explicitly via the ``grad`` argument.

On skeleton domains, fields restricted to the two sides of a facet form a
:class:`SkeletonPair`; ``jump`` and ``mean`` turn pairs back into plain
facet fields. The skeleton normal is single valued (it points out of the
plus cell, the one with the smaller id), so ``jump(v * n)`` evaluates to
``v+ n+ + v- n-``.
"""

from __future__ import annotations

import numpy as np

from .reffe import piola_divergence, piola_map

__all__ = [
    "Constant",
    "MissingGradientError",
    "NormalField",
    "SkeletonPair",
    "Workspace",
    "analytic",
    "divergence",
    "gradient",
    "inner",
    "integrate",
    "jump",
    "matvec",
    "mean",
    "norm",
    "physical_coordinate",
    "pointwise_law",
    "restrict",
    "symmetric_gradient",
    "trace",
    "transpose",
]


class MissingGradientError(ValueError):
    """An analytic field was differentiated without a registered gradient."""


class Workspace:
    """Reusable scratch holding basis tables keyed by (domain, space, points).

    Passing one workspace through repeated assemblies of the same operator
    (e.g. across Newton iterations) avoids re-tabulating shape functions.
    Workspaces are not thread-safe; parallel assembly uses one per worker.
    """

    def __init__(self):
        self.tables = {}


# -- evaluation contexts -------------------------------------------------------


class EvalContext:
    """One uniform batch: cells sharing reference points and integration scale."""

    def __init__(self, model, cells, ref_pts, wscale, normal=None, cache=None, key=()):
        self.model = model
        self.cells = np.asarray(cells)
        self.ref_pts = ref_pts
        self.wscale = wscale  # quadrature weights times detJ / facet measure
        self.normal = normal
        self._cache = cache if cache is not None else {}
        self._key = key
        self._xphys = None

    @property
    def dim(self):
        return self.model.dim

    @property
    def num_cells(self):
        return len(self.cells)

    @property
    def num_points(self):
        return self.ref_pts.shape[0]

    @property
    def xphys(self):
        if self._xphys is None:
            origin = self.model.cell_origin(self.cells)
            self._xphys = origin[:, None, :] + self.ref_pts[None, :, :] * self.model.h
        return self._xphys

    def tables(self, space, kind):
        """Physical basis tables of a space at this batch's reference points.

        kind is 'val', 'grad' or 'div'; shapes are (ndof, nq, *value_shape),
        (ndof, nq, *value_shape, dim) and (ndof, nq). Constant per batch
        because the cell Jacobian is uniform.
        """
        key = self._key + (space, kind)
        cache = self._cache
        if key not in cache:
            elem = space.element
            h = self.model.h
            if kind == "val":
                t = elem.values(self.ref_pts)
                if elem.family == "RT":
                    t = piola_map(h, t)
            elif kind == "grad":
                if elem.family == "RT":
                    raise NotImplementedError(
                        "gradients of Raviart-Thomas fields are not supported"
                    )
                t = elem.gradients(self.ref_pts) / h
            elif kind == "div":
                if elem.family == "RT":
                    t = piola_divergence(h, elem.divergences(self.ref_pts))
                else:
                    g = self.tables(space, "grad")
                    t = np.trace(g, axis1=-2, axis2=-1)
            else:
                raise ValueError(f"unknown table kind {kind!r}")
            cache[key] = t
        return cache[key]


class SkeletonContext:
    """Two-sided batch for interior facets; plus/minus share points and normal."""

    def __init__(self, plus, minus, wscal=None):
        self.plus = plus
        self.minus = minus
        self.wscale = wscal if wscal is not None else plus.wscale
        self.normal = plus.normal

    @property
    def dim(self):
        return self.plus.dim

    @property
    def num_cells(self):
        return self.plus.num_cells

    @property
    def num_points(self):
        return self.plus.num_points

    @property
    def xphys(self):
        return self.plus.xphys

    @property
    def cells(self):
        raise TypeError(
            "FE fields are two valued on the skeleton; apply restrict() first"
        )

    def tables(self, space, kind):
        raise TypeError(
            "FE fields are two valued on the skeleton; apply restrict() first"
        )


def make_contexts(trian, quad, max_batch=None, workspace=None, work_per_cell=None):
    """Yield (entry_indices, context) batches covering a triangulation.

    Interior cells are chunked so one batch materializes at most a few
    million scalars; ``work_per_cell`` (defaults to the quadrature point
    count) lets assemblers account for the test/trial axes of their
    integrand arrays.
    """
    cache = workspace.tables if workspace is not None else None
    model = trian.model
    if trian.kind == "interior":
        n = trian.num_entries
        nq = quad.num_points
        if max_batch is None:
            per_cell = work_per_cell if work_per_cell else nq
            max_batch = max(1, int(4_000_000 // max(per_cell, 1)))
        wscale = quad.weights * trian.detj
        start = 0
        while start < n:
            stop = min(start + max_batch, n)
            yield np.arange(start, stop), EvalContext(
                model,
                trian.cells[start:stop],
                quad.points,
                wscale,
                cache=cache,
                key=(trian, "i", quad.degree),
            )
            start = stop
    elif trian.kind in ("boundary", "skeleton"):
        nq = quad.num_points
        if max_batch is None:
            per_cell = work_per_cell if work_per_cell else nq
            max_batch = max(1, int(4_000_000 // max(per_cell, 1)))
        for gi, g in enumerate(trian.groups):
            meas = trian.measure[g.entries[0]]
            wscale = quad.weights * meas
            for start in range(0, len(g.entries), max_batch):
                part = slice(start, start + max_batch)
                if trian.kind == "boundary":
                    yield g.entries[part], EvalContext(
                        model,
                        g.cells[part],
                        g.embed(quad.points),
                        wscale,
                        normal=g.normal,
                        cache=cache,
                        key=(trian, "b", gi, quad.degree),
                    )
                else:
                    plus = EvalContext(
                        model,
                        g.cells[part],
                        g.embed(quad.points, minus=False),
                        wscale,
                        normal=g.normal,
                        cache=cache,
                        key=(trian, "s+", gi, quad.degree),
                    )
                    minus = EvalContext(
                        model,
                        g.minus_cells[part],
                        g.embed(quad.points, minus=True),
                        wscale,
                        normal=g.normal,
                        cache=cache,
                        key=(trian, "s-", gi, quad.degree),
                    )
                    yield g.entries[part], SkeletonContext(plus, minus)
    else:
        raise TypeError(f"unknown triangulation kind {trian.kind!r}")


# -- field expression nodes ----------------------------------------------------


def _order(arr):
    """Number of value axes of an evaluated array."""
    return arr.ndim - 4


class CellField:
    """Base class for field expressions; see the module docstring for the
    evaluation protocol."""

    def evaluate(self, ctx):
        raise NotImplementedError

    # arithmetic builds expression nodes; pairs take precedence
    def __add__(self, other):
        if isinstance(other, SkeletonPair):
            return NotImplemented
        return _Sum(self, _wrap(other))

    def __radd__(self, other):
        return _Sum(_wrap(other), self)

    def __sub__(self, other):
        if isinstance(other, SkeletonPair):
            return NotImplemented
        return _Sum(self, _Neg(_wrap(other)))

    def __rsub__(self, other):
        return _Sum(_wrap(other), _Neg(self))

    def __neg__(self):
        return _Neg(self)

    def __mul__(self, other):
        if isinstance(other, SkeletonPair):
            return NotImplemented
        return _Prod(self, _wrap(other))

    def __rmul__(self, other):
        return _Prod(_wrap(other), self)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return _Prod(Constant(1.0 / other), self)
        return NotImplemented

    def __pow__(self, p):
        return _Pow(self, float(p))


def _wrap(x):
    if isinstance(x, CellField):
        return x
    if isinstance(x, (int, float, np.floating, np.integer)):
        return Constant(float(x))
    if isinstance(x, np.ndarray):
        return Constant(x)
    raise TypeError(f"cannot use {type(x).__name__} as a field")


class Constant(CellField):
    def __init__(self, value):
        self.value = np.asarray(value, dtype=float)

    def evaluate(self, ctx):
        return self.value.reshape((1, 1, 1, 1) + self.value.shape)


class _ZeroGrad(CellField):
    """Gradient of a constant: zero with the spatial axis sized at evaluation."""

    def __init__(self, base_shape):
        self.base_shape = tuple(base_shape)

    def evaluate(self, ctx):
        return np.zeros((1, 1, 1, 1) + self.base_shape + (ctx.dim,))


class ZeroField(CellField):
    """Zero-valued field with a fixed value shape (block-assembly placeholder)."""

    def __init__(self, value_shape):
        self.value_shape = tuple(value_shape)

    def evaluate(self, ctx):
        return np.zeros((1, 1, 1, 1) + self.value_shape)


class AnalyticField(CellField):
    def __init__(self, fn, grad=None, value_shape=()):
        self.fn = fn
        self.grad_fn = grad
        self.value_shape = tuple(value_shape)

    def evaluate(self, ctx):
        x = ctx.xphys  # (nc, nq, d)
        vs = tuple(ctx.dim if s == -1 else s for s in self.value_shape)
        out = np.asarray(self.fn(x), dtype=float)
        expected = x.shape[:2] + vs
        out = np.broadcast_to(out, expected)
        nc, nq = x.shape[:2]
        return out.reshape((nc, 1, 1, nq) + vs)


def analytic(fn, grad=None, value_shape=()):
    """Field given by a vectorized function of the physical coordinates.

    ``grad``, if supplied, is the function returning the gradient with one
    trailing spatial axis; it is required before the field can be
    differentiated.
    """
    return AnalyticField(fn, grad=grad, value_shape=value_shape)


class PhysicalCoordinateField(CellField):
    def evaluate(self, ctx):
        x = ctx.xphys
        nc, nq, d = x.shape
        return x.reshape(nc, 1, 1, nq, d)


def physical_coordinate(trian=None):
    """The position vector as a field (usable inside pointwise laws)."""
    return PhysicalCoordinateField()


class NormalField(CellField):
    """Unit normal of a boundary or skeleton domain, constant per facet batch."""

    def __init__(self, trian):
        self.trian = trian

    def evaluate(self, ctx):
        if ctx.normal is None:
            raise TypeError("normal vector requested on a domain without one")
        d = len(ctx.normal)
        return np.asarray(ctx.normal).reshape(1, 1, 1, 1, d)


class FEField(CellField):
    """Evaluation of a finite element function (or one field of a solution)."""

    def __init__(self, fefun):
        self.fefun = fefun
        self.space = fefun.space
        self.value_shape = fefun.space.value_shape

    def _contract(self, ctx, kind):
        tables = ctx.tables(self.space, kind)
        dofs = self.space.cell_dofs[ctx.cells]  # (nc, ndof)
        vals = self.fefun.raw_values[dofs]  # (nc, ndof)
        out = np.tensordot(vals, tables, axes=(1, 0))  # (nc, nq, ...)
        shape = out.shape
        return out.reshape((shape[0], 1, 1) + shape[1:])

    def evaluate(self, ctx):
        return self._contract(ctx, "val")


class _FEGrad(FEField):
    def evaluate(self, ctx):
        return self._contract(ctx, "grad")


class _FEDiv(FEField):
    def evaluate(self, ctx):
        return self._contract(ctx, "div")


class BasisField(CellField):
    """Test or trial basis of a space; occupies the matching dof axis."""

    def __init__(self, space, role):
        if role not in ("test", "trial"):
            raise ValueError("role must be 'test' or 'trial'")
        self.space = space
        self.role = role
        self.value_shape = space.value_shape

    _kind = "val"

    def evaluate(self, ctx):
        t = ctx.tables(self.space, self._kind)  # (ndof, nq, ...)
        shape = t.shape
        if self.role == "test":
            return t.reshape((1, shape[0], 1) + shape[1:])
        return t.reshape((1, 1, shape[0]) + shape[1:])


class _BasisGrad(BasisField):
    _kind = "grad"


class _BasisDiv(BasisField):
    _kind = "div"


# -- operations ------------------------------------------------------------


class _Sum(CellField):
    def __init__(self, a, b):
        self.a, self.b = a, b

    def evaluate(self, ctx):
        return self.a.evaluate(ctx) + self.b.evaluate(ctx)


class _Neg(CellField):
    def __init__(self, a):
        self.a = a

    def evaluate(self, ctx):
        return -self.a.evaluate(ctx)


class _Prod(CellField):
    """Pointwise product; at least one factor must be scalar valued."""

    def __init__(self, a, b):
        self.a, self.b = a, b

    def evaluate(self, ctx):
        va = self.a.evaluate(ctx)
        vb = self.b.evaluate(ctx)
        oa, ob = _order(va), _order(vb)
        if oa and ob:
            raise TypeError(
                "product of two non-scalar fields; use inner() or matvec()"
            )
        if oa:  # scalar times tensor: pad the scalar's trailing axes
            vb = vb.reshape(vb.shape + (1,) * oa)
        elif ob:
            va = va.reshape(va.shape + (1,) * ob)
        return va * vb


class _Pow(CellField):
    def __init__(self, a, p):
        self.a, self.p = a, p

    def evaluate(self, ctx):
        v = self.a.evaluate(ctx)
        if _order(v):
            raise TypeError("powers apply to scalar fields only")
        return v**self.p


class _Inner(CellField):
    """Full contraction over the value axes of two equally shaped fields."""

    def __init__(self, a, b):
        self.a, self.b = a, b

    def evaluate(self, ctx):
        va = self.a.evaluate(ctx)
        vb = self.b.evaluate(ctx)
        oa, ob = _order(va), _order(vb)
        if oa != ob:
            raise TypeError(f"inner() needs matching value ranks, got {oa} and {ob}")
        if oa == 0:
            return va * vb
        prod = va * vb
        return prod.sum(axis=tuple(range(-oa, 0)))


class _MatVec(CellField):
    def __init__(self, a, x):
        self.a, self.x = a, x

    def evaluate(self, ctx):
        va = self.a.evaluate(ctx)
        vx = self.x.evaluate(ctx)
        if _order(va) != 2 or _order(vx) != 1:
            raise TypeError("matvec() needs a matrix field and a vector field")
        return np.einsum("...ij,...j->...i", va, vx)


class _Transpose(CellField):
    def __init__(self, a):
        self.a = a

    def evaluate(self, ctx):
        v = self.a.evaluate(ctx)
        if _order(v) != 2:
            raise TypeError("transpose() applies to matrix fields")
        return np.swapaxes(v, -1, -2)


class _Trace(CellField):
    def __init__(self, a):
        self.a = a

    def evaluate(self, ctx):
        v = self.a.evaluate(ctx)
        if _order(v) != 2:
            raise TypeError("trace() applies to matrix fields")
        return np.trace(v, axis1=-2, axis2=-1)


class _Norm(CellField):
    def __init__(self, a):
        self.a = a

    def evaluate(self, ctx):
        v = self.a.evaluate(ctx)
        o = _order(v)
        if o == 0:
            return np.abs(v)
        return np.sqrt((v * v).sum(axis=tuple(range(-o, 0))))


class _Law(CellField):
    """Pointwise application of a vectorized function to field values."""

    def __init__(self, fn, args):
        self.fn = fn
        self.args = args

    def evaluate(self, ctx):
        vals = [a.evaluate(ctx) for a in self.args]
        return np.asarray(self.fn(*vals), dtype=float)


def inner(a, b):
    """Full contraction: dot product for vectors, double dot for matrices.

    Applied to a skeleton pair it contracts each side, returning a pair.
    """
    if isinstance(a, SkeletonPair) or isinstance(b, SkeletonPair):
        if isinstance(a, SkeletonPair):
            return a._map2(b, inner)
        return b._map2(a, lambda x, y: inner(y, x))
    return _Inner(_wrap(a), _wrap(b))


def matvec(a, x):
    """Matrix-vector product field: (A x)_i = A_ij x_j."""
    return _MatVec(_wrap(a), _wrap(x))


def transpose(a):
    return _Transpose(_wrap(a))


def trace(a):
    return _Trace(_wrap(a))


def norm(a):
    """Euclidean norm of a vector/matrix field (absolute value for scalars)."""
    return _Norm(_wrap(a))


def pointwise_law(fn, *fields):
    """Apply ``fn`` at every integration point.

    ``fn`` receives the evaluated numpy arrays of the argument fields, with
    value axes trailing and broadcastable batch axes leading, and must return
    an array of the same convention (the usual numpy ufunc style).
    """
    if not fields:
        raise TypeError("pointwise_law needs at least one argument field")
    wrapped = []
    for f in fields:
        if isinstance(f, SkeletonPair):
            raise TypeError("laws on the skeleton: apply jump()/mean() first")
        wrapped.append(_wrap(f))
    return _Law(fn, wrapped)


def gradient(f):
    """Spatial gradient; FE fields differentiate exactly through the cell map,
    analytic fields require a registered gradient function."""
    if isinstance(f, SkeletonPair):
        return SkeletonPair(gradient(f.plus), gradient(f.minus), f.skeleton)
    f = _wrap(f)
    if isinstance(f, AnalyticField):
        if f.grad_fn is None:
            raise MissingGradientError(
                "analytic field has no registered gradient; pass grad= when building it"
            )
        return AnalyticField(f.grad_fn, value_shape=f.value_shape + (-1,))
    if isinstance(f, (_FEGrad, _BasisGrad, _FEDiv, _BasisDiv)):
        raise TypeError("second derivatives are not supported")
    if isinstance(f, FEField):
        return _FEGrad(f.fefun)
    if isinstance(f, BasisField):
        return _BasisGrad(f.space, f.role)
    if isinstance(f, Constant):
        return _ZeroGrad(f.value.shape)
    if isinstance(f, ZeroField):
        return _ZeroGrad(f.value_shape)
    if isinstance(f, _Sum):
        return _Sum(gradient(f.a), gradient(f.b))
    if isinstance(f, _Neg):
        return _Neg(gradient(f.a))
    raise MissingGradientError(
        f"cannot differentiate a {type(f).__name__}; gradients are not derived "
        "automatically for composite fields"
    )


def divergence(f):
    """Divergence of a vector field: trace of the gradient for Lagrangian
    fields, the Piola-transformed reference divergence for Raviart-Thomas."""
    if isinstance(f, SkeletonPair):
        return SkeletonPair(divergence(f.plus), divergence(f.minus), f.skeleton)
    f = _wrap(f)
    if isinstance(f, BasisField) and not isinstance(f, (_BasisGrad, _BasisDiv)):
        if len(f.value_shape) != 1:
            raise TypeError("divergence applies to vector fields")
        return _BasisDiv(f.space, f.role)
    if isinstance(f, FEField) and not isinstance(f, (_FEGrad, _FEDiv)):
        if len(f.value_shape) != 1:
            raise TypeError("divergence applies to vector fields")
        return _FEDiv(f.fefun)
    if isinstance(f, ZeroField):
        if len(f.value_shape) != 1:
            raise TypeError("divergence applies to vector fields")
        return ZeroField(())
    if isinstance(f, _Sum):
        return _Sum(divergence(f.a), divergence(f.b))
    if isinstance(f, _Neg):
        return _Neg(divergence(f.a))
    return trace(gradient(f))


def symmetric_gradient(u):
    """Strain field: 0.5 (grad u + (grad u)^T). Rejects scalar fields."""
    if isinstance(u, (FEField, BasisField, ZeroField, AnalyticField)):
        if len(u.value_shape) != 1:
            raise TypeError("symmetric_gradient applies to vector fields")
    g = gradient(u)
    return 0.5 * (g + transpose(g))


# -- skeleton pairs ----------------------------------------------------------


class SkeletonPair:
    """Two-sided restriction of a field to the interior facets."""

    def __init__(self, plus, minus, skeleton):
        self.plus = plus
        self.minus = minus
        self.skeleton = skeleton

    def _check(self, other):
        if isinstance(other, SkeletonPair) and other.skeleton is not self.skeleton:
            raise ValueError("cannot mix restrictions to different skeletons")

    def _map2(self, other, op):
        self._check(other)
        if isinstance(other, SkeletonPair):
            return SkeletonPair(
                op(self.plus, other.plus), op(self.minus, other.minus), self.skeleton
            )
        other = _wrap(other)
        return SkeletonPair(op(self.plus, other), op(self.minus, other), self.skeleton)

    def __add__(self, other):
        return self._map2(other, lambda a, b: a + b)

    __radd__ = __add__

    def __sub__(self, other):
        return self._map2(other, lambda a, b: a - b)

    def __rsub__(self, other):
        return self._map2(other, lambda a, b: b - a)

    def __neg__(self):
        return SkeletonPair(-self.plus, -self.minus, self.skeleton)

    def __mul__(self, other):
        return self._map2(other, lambda a, b: a * b)

    __rmul__ = __mul__


def restrict(f, skeleton):
    """Restrict a field defined on the model to both sides of the skeleton."""
    if skeleton.kind != "skeleton":
        raise TypeError("restrict() expects a skeleton triangulation")
    f = _wrap(f)
    if isinstance(f, (FEField, BasisField)):
        if f.space.model is not skeleton.model:
            raise ValueError("field and skeleton live on different models")
    return SkeletonPair(f, f, skeleton)


class _JumpField(CellField):
    def __init__(self, pair):
        self.pair = pair

    def evaluate(self, ctx):
        if not isinstance(ctx, SkeletonContext):
            raise TypeError("jump fields evaluate on skeleton domains only")
        return self.pair.plus.evaluate(ctx.plus) - self.pair.minus.evaluate(ctx.minus)


class _MeanField(CellField):
    def __init__(self, pair):
        self.pair = pair

    def evaluate(self, ctx):
        if not isinstance(ctx, SkeletonContext):
            raise TypeError("mean fields evaluate on skeleton domains only")
        return 0.5 * (
            self.pair.plus.evaluate(ctx.plus) + self.pair.minus.evaluate(ctx.minus)
        )


def jump(pair):
    """Jump across interior facets: plus-side minus minus-side values.

    Combined with the single-valued skeleton normal, ``jump(v * n)`` is the
    interior-penalty jump v+ n+ + v- n-.
    """
    if not isinstance(pair, SkeletonPair):
        raise TypeError("jump() expects a SkeletonPair (use restrict() first)")
    return _JumpField(pair)


def mean(pair):
    """Average of the two side values across interior facets."""
    if not isinstance(pair, SkeletonPair):
        raise TypeError("mean() expects a SkeletonPair (use restrict() first)")
    return _MeanField(pair)


# -- integration -------------------------------------------------------------


def integrate(integrand, trian, quad, workspace=None):
    """Per-entry contributions of a scalar integrand over a domain.

    Entry c receives sum_q w_q f(x_q) scale, where scale is the cell
    Jacobian determinant (interior) or the facet measure (boundary and
    skeleton domains). Summing the result gives the integral.
    """
    integrand = _wrap(integrand)
    if isinstance(integrand, SkeletonPair):
        raise TypeError("integrands must be single valued; apply jump()/mean()")
    out = np.zeros(trian.num_entries)
    for entries, ctx in make_contexts(trian, quad, workspace=workspace):
        arr = integrand.evaluate(ctx)
        if _order(arr) != 0:
            raise TypeError("integrands must be scalar valued")
        if arr.shape[1] != 1 or arr.shape[2] != 1:
            raise TypeError("integrands must not contain free basis functions")
        nc, nq = ctx.num_cells, ctx.num_points
        vals = np.broadcast_to(arr, (nc, 1, 1, nq)).reshape(nc, nq)
        out[entries] = vals @ ctx.wscale
    return out
