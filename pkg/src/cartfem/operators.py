"""Weak-form terms, sparse assembly and FE operators.

Terms pair integrands with one integration domain and quadrature each:

* ``AffineTerm(a, b, trian, quad)``: matrix and right-hand-side integrands;
* ``LinearTerm(a, trian, quad)``: matrix only;
* ``SourceTerm(b, trian, quad)``: right hand side only;
* ``NonlinearTerm(res, jac, trian, quad)``: residual and Jacobian integrands.

Bilinear integrands are called as ``a(u, v)`` with trial/test basis
placeholders (tuples of placeholders for multi-field spaces); on skeleton
domains the placeholders are two-sided pairs expanding to coupled blocks
over the plus/minus cell dofs. Nonlinear integrands are ``res(u, v)`` and
``jac(u, du, v)`` with ``u`` the current iterate.

Assembled matrices are scipy CSR (compressed sparse rows: ``indptr`` row
offsets, ``indices`` column indices, ``data`` values) over the free dofs,
with duplicates summed during finalization. Dirichlet conditions are
eliminated: constrained columns are folded into the right hand side against
the trial space's constrained values, and constrained rows are dropped.
Elemental blocks enter a COO accumulator in a fixed batch order, so
assembly is reproducible bit for bit; ``threads > 1`` evaluates disjoint
cell batches concurrently and merges them in the same order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.sparse as sp

from . import kernels
from .cellfield import (
    SkeletonContext,
    SkeletonPair,
    Workspace,
    ZeroField,
    _order,
    make_contexts,
    restrict,
)
from .fespace import FESpace, MultiFieldSpace, TrialSpace

__all__ = [
    "AffineOperator",
    "AffineTerm",
    "LinearTerm",
    "NonlinearOperator",
    "NonlinearTerm",
    "SourceTerm",
    "assemble_affine",
    "nonlinear_operator",
]


class AffineTerm:
    """Contributes to both the system matrix and the right hand side."""

    def __init__(self, a, b, trian, quad):
        self.a = a
        self.b = b
        self.trian = trian
        self.quad = quad


class LinearTerm:
    """Contributes to the system matrix only."""

    def __init__(self, a, trian, quad):
        self.a = a
        self.b = None
        self.trian = trian
        self.quad = quad


class SourceTerm:
    """Contributes to the right hand side only."""

    def __init__(self, b, trian, quad):
        self.a = None
        self.b = b
        self.trian = trian
        self.quad = quad


class NonlinearTerm:
    """Residual and Jacobian integrands over one domain."""

    def __init__(self, res, jac, trian, quad):
        self.res = res
        self.jac = jac
        self.trian = trian
        self.quad = quad


# -- space plumbing ------------------------------------------------------------


class _SpaceView:
    """Uniform access to single-/multi-field spaces; ``raw=True`` bypasses
    the free/constrained split (full raw-dof systems, for testing)."""

    def __init__(self, obj, raw=False):
        self.raw = raw
        if isinstance(obj, MultiFieldSpace):
            if raw:
                raise ValueError("raw assembly supports single-field spaces only")
            self.multi = True
            self.fields = [
                f.space if isinstance(f, TrialSpace) else f for f in obj.fields
            ]
            self.trials = [f if isinstance(f, TrialSpace) else None for f in obj.fields]
            self.offsets = obj.offsets
            self.num_free = obj.num_free_dofs
            self.model = obj.model
        else:
            trial = obj if isinstance(obj, TrialSpace) else None
            space = obj.space if isinstance(obj, TrialSpace) else obj
            if not isinstance(space, FESpace):
                raise TypeError(f"expected a FE space, got {type(obj).__name__}")
            self.multi = False
            self.fields = [space]
            self.trials = [trial]
            n = space.num_raw_dofs if raw else space.num_free_dofs
            self.offsets = np.array([0, n])
            self.num_free = n
            self.model = space.model

    @property
    def num_fields(self):
        return len(self.fields)

    def placeholders(self, active, kind, skeleton=None, side=None):
        """Basis/zero placeholders, only field ``active`` non-zero; on a
        skeleton, ``side`` picks which half of the pair carries the basis."""
        out = []
        for i, space in enumerate(self.fields):
            f = space.basis(kind) if i == active else ZeroField(space.value_shape)
            if skeleton is not None:
                zero = ZeroField(space.value_shape)
                if i != active:
                    f = SkeletonPair(f, zero, skeleton)
                elif side == "plus":
                    f = SkeletonPair(f, zero, skeleton)
                else:
                    f = SkeletonPair(zero, f, skeleton)
            out.append(f)
        return tuple(out) if self.multi else out[0]

    def functions_arg(self, xh, skeleton=None):
        parts = tuple(xh.parts) if self.multi else (xh,)
        if skeleton is not None:
            parts = tuple(restrict(p, skeleton) for p in parts)
        return parts if self.multi else parts[0]

    def rows(self, field, cells):
        """Encoded dof rows for a batch: free index plus block offset, or a
        negative value (-1 - constrained index) for constrained dofs."""
        space = self.fields[field]
        dofs = space.cell_dofs[cells]
        if self.raw:
            return dofs.astype(np.int64)
        enc = space.dof_index[dofs]
        return np.where(enc >= 0, enc + self.offsets[field], enc).astype(np.int64)

    def dirichlet_values(self, field):
        if self.raw or self.trials[field] is None:
            return np.zeros(self.fields[field].num_constrained_dofs)
        return self.trials[field].dirichlet_values


def _full_bilinear(arr, nc, nv, nu, nq):
    if _order(arr) != 0:
        raise TypeError("bilinear integrands must be scalar valued")
    try:
        return np.broadcast_to(arr, (nc, nv, nu, nq))
    except ValueError:
        raise TypeError(
            f"bilinear integrand of shape {arr.shape} does not fit "
            f"(cells, test, trial, points) = {(nc, nv, nu, nq)}"
        ) from None


def _full_linear(arr, nc, nv, nq):
    if _order(arr) != 0:
        raise TypeError("linear integrands must be scalar valued")
    if arr.shape[2] != 1:
        raise TypeError("linear integrands must not contain trial functions")
    return np.broadcast_to(arr[:, :, 0, :], (nc, nv, nq))


class _COO:
    """Triplet accumulator; blocks keep their insertion order."""

    def __init__(self):
        self.rows = []
        self.cols = []
        self.vals = []

    def add_block(self, ke, rows, cols, dvals, rhs):
        nc, nv, nu = ke.shape
        out_r = np.empty(nc * nv * nu, dtype=np.int64)
        out_c = np.empty(nc * nv * nu, dtype=np.int64)
        out_v = np.empty(nc * nv * nu, dtype=np.float64)
        nnz = kernels.scatter_bilinear(ke, rows, cols, dvals, rhs, out_r, out_c, out_v)
        self.rows.append(out_r[:nnz].copy())
        self.cols.append(out_c[:nnz].copy())
        self.vals.append(out_v[:nnz].copy())

    def extend(self, other):
        self.rows.extend(other.rows)
        self.cols.extend(other.cols)
        self.vals.extend(other.vals)

    def matrix(self, nrows, ncols):
        if self.rows:
            r = np.concatenate(self.rows)
            c = np.concatenate(self.cols)
            v = np.concatenate(self.vals)
        else:
            r = c = np.zeros(0, dtype=np.int64)
            v = np.zeros(0)
        return sp.coo_matrix((v, (r, c)), shape=(nrows, ncols)).tocsr()


class _Assembler:
    """Shared batch loop for matrix and vector contributions."""

    def __init__(self, testv, trialv, workspace, threads=1):
        self.testv = testv
        self.trialv = trialv
        self.workspace = workspace if workspace is not None else Workspace()
        self.threads = max(1, int(threads))

    def _jobs(self, term):
        nv = max(f.element.num_dofs for f in self.testv.fields)
        nu = max(f.element.num_dofs for f in self.trialv.fields)
        work = nv * nu * term.quad.num_points
        return [
            (term, entries, ctx)
            for entries, ctx in make_contexts(
                term.trian, term.quad, workspace=self.workspace, work_per_cell=work
            )
        ]

    def _matrix_batch(self, term, ctx, bilinear, coo, rhs):
        testv, trialv = self.testv, self.trialv
        nc, nq = ctx.num_cells, ctx.num_points
        if isinstance(ctx, SkeletonContext):
            strian = term.trian
            for ti in range(testv.num_fields):
                for tj in range(trialv.num_fields):
                    for vside in ("plus", "minus"):
                        for uside in ("plus", "minus"):
                            v = testv.placeholders(ti, "test", strian, vside)
                            u = trialv.placeholders(tj, "trial", strian, uside)
                            arr = bilinear(u, v).evaluate(ctx)
                            nv = testv.fields[ti].element.num_dofs
                            nu = trialv.fields[tj].element.num_dofs
                            full = _full_bilinear(arr, nc, nv, nu, nq)
                            ke = kernels.bilinear_accumulate(full, ctx.wscale)
                            vcells = (ctx.plus if vside == "plus" else ctx.minus).cells
                            ucells = (ctx.plus if uside == "plus" else ctx.minus).cells
                            coo.add_block(
                                ke,
                                testv.rows(ti, vcells),
                                trialv.rows(tj, ucells),
                                trialv.dirichlet_values(tj),
                                rhs,
                            )
        else:
            for ti in range(testv.num_fields):
                for tj in range(trialv.num_fields):
                    v = testv.placeholders(ti, "test")
                    u = trialv.placeholders(tj, "trial")
                    arr = bilinear(u, v).evaluate(ctx)
                    nv = testv.fields[ti].element.num_dofs
                    nu = trialv.fields[tj].element.num_dofs
                    full = _full_bilinear(arr, nc, nv, nu, nq)
                    ke = kernels.bilinear_accumulate(full, ctx.wscale)
                    coo.add_block(
                        ke,
                        testv.rows(ti, ctx.cells),
                        trialv.rows(tj, ctx.cells),
                        trialv.dirichlet_values(tj),
                        rhs,
                    )

    def _vector_batch(self, term, ctx, linear, rhs):
        if isinstance(ctx, SkeletonContext):
            raise TypeError(
                "right-hand-side integrands on the skeleton are not supported"
            )
        nc, nq = ctx.num_cells, ctx.num_points
        for ti in range(self.testv.num_fields):
            v = self.testv.placeholders(ti, "test")
            arr = linear(v).evaluate(ctx)
            nv = self.testv.fields[ti].element.num_dofs
            full = _full_linear(arr, nc, nv, nq)
            fe = kernels.linear_accumulate(full, ctx.wscale)
            kernels.scatter_linear(fe, self.testv.rows(ti, ctx.cells), rhs)

    def run(self, terms, bilinear_of, linear_of):
        """Assemble all terms; returns (coo, rhs). ``bilinear_of``/``linear_of``
        map a term to its integrand (or None)."""
        jobs = []
        for term in terms:
            jobs.extend(self._jobs(term))

        def work(job):
            term, entries, ctx = job
            coo = _COO()
            rhs = np.zeros(self.testv.num_free)
            a = bilinear_of(term)
            b = linear_of(term)
            if a is not None:
                self._matrix_batch(term, ctx, a, coo, rhs)
            if b is not None:
                self._vector_batch(term, ctx, b, rhs)
            return coo, rhs

        if self.threads == 1:
            results = [work(j) for j in jobs]
        else:
            with ThreadPoolExecutor(max_workers=self.threads) as ex:
                results = list(ex.map(work, jobs))
        coo = _COO()
        rhs = np.zeros(self.testv.num_free)
        for c, r in results:
            coo.extend(c)
            rhs += r
        return coo, rhs


class AffineOperator:
    """Assembled sparse system A x = b over the free dofs."""

    def __init__(self, matrix, vector, trial_obj, test_obj):
        self.matrix = matrix
        self.vector = vector
        self._trial_obj = trial_obj
        self._test_obj = test_obj

    def solve(self, solver=None):
        """Solve and wrap the free values into a (multi-)field function."""
        if self._trial_obj is None:
            raise TypeError("raw operators carry no trial space to solve into")
        if solver is None:
            from .solvers import SparseLU

            solver = SparseLU()
        x = solver.solve(self.matrix, self.vector)
        return self._trial_obj.function(x)


def _check_spaces(testv, trialv, terms):
    if testv.model is not trialv.model:
        raise ValueError("trial and test spaces live on different models")
    if testv.num_free != trialv.num_free:
        raise ValueError("trial and test spaces must pair to a square system")
    for term in terms:
        if isinstance(term, NonlinearTerm):
            raise TypeError("nonlinear terms need nonlinear_operator()")
        if term.trian.model is not testv.model:
            raise ValueError("a term's domain lives on a different model")


def assemble_affine(trial, test, *terms, workspace=None, threads=1, eliminate=True):
    """Assemble an affine operator from affine/linear/source terms.

    ``trial`` supplies constrained dof values (a :class:`TrialSpace`, or a
    multi-field space of trial spaces); ``test`` the matching test spaces.
    With ``eliminate=False`` the full system over raw dofs is returned with
    no boundary handling (single-field only; testing aid).
    """
    if not terms:
        raise ValueError("need at least one term")
    testv = _SpaceView(test, raw=not eliminate)
    trialv = _SpaceView(trial, raw=not eliminate)
    _check_spaces(testv, trialv, terms)
    asm = _Assembler(testv, trialv, workspace, threads)
    coo, rhs = asm.run(terms, lambda t: t.a, lambda t: t.b)
    A = coo.matrix(testv.num_free, trialv.num_free)
    return AffineOperator(A, rhs, trial if eliminate else None, test)


class NonlinearOperator:
    """Residual/Jacobian assembly closures over a list of nonlinear terms."""

    def __init__(self, trial, test, *terms, workspace=None, threads=1):
        for term in terms:
            if not isinstance(term, NonlinearTerm):
                raise TypeError("nonlinear_operator expects NonlinearTerm objects")
        self._trial = trial
        self.testv = _SpaceView(test)
        self.trialv = _SpaceView(trial)
        if self.testv.num_free != self.trialv.num_free:
            raise ValueError("trial and test spaces must pair to a square system")
        self.terms = terms
        self.asm = _Assembler(self.testv, self.trialv, workspace, threads)

    @property
    def num_free_dofs(self):
        return self.testv.num_free

    def initial_guess(self, free_values=None):
        """Trial-space function for starting Newton (zero by default)."""
        if free_values is None:
            return self._trial.zero_function()
        return self._trial.function(free_values)

    def make_function(self, free):
        return self._trial.function(free)

    def residual(self, xh):
        def linear_of(term, _xh=xh):
            def integrand(v, term=term):
                u = self.trialv.functions_arg(
                    _xh, term.trian if term.trian.kind == "skeleton" else None
                )
                return term.res(u, v)

            return integrand

        _, rhs = self.asm.run(self.terms, lambda t: None, linear_of)
        return rhs

    def jacobian(self, xh):
        """Jacobian over free dofs. Newton increments vanish on constrained
        dofs, so constrained columns are simply dropped (the assembler folds
        them against the raw=0 value vector of the test view)."""

        def bilinear_of(term, _xh=xh):
            def integrand(du, v, term=term):
                u = self.trialv.functions_arg(
                    _xh, term.trian if term.trian.kind == "skeleton" else None
                )
                return term.jac(u, du, v)

            return integrand

        coo, _ = self._jac_asm().run(self.terms, bilinear_of, lambda t: None)
        return coo.matrix(self.testv.num_free, self.trialv.num_free)

    def _jac_asm(self):
        # same assembler, but dirichlet folding must use zero values
        asm = _Assembler(self.testv, _ZeroDirichlet(self.trialv), None, self.asm.threads)
        asm.workspace = self.asm.workspace
        return asm

    def residual_and_jacobian(self, xh):
        return self.residual(xh), self.jacobian(xh)


class _ZeroDirichlet:
    """Trial view wrapper substituting zero constrained values (Jacobians)."""

    def __init__(self, view):
        self._view = view

    def __getattr__(self, name):
        return getattr(self._view, name)

    def dirichlet_values(self, field):
        return np.zeros(self._view.fields[field].num_constrained_dofs)


def nonlinear_operator(trial, test, *terms, workspace=None, threads=1):
    """Nonlinear FE problem from residual/Jacobian terms."""
    return NonlinearOperator(trial, test, *terms, workspace=workspace, threads=threads)
