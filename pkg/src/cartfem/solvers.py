"""Linear and nonlinear solvers.

``SparseLU`` wraps a sparse direct LU factorization with partial pivoting
(SuperLU through scipy) behind the solver interface used everywhere else;
``ConjugateGradient`` is a hand-rolled CG for symmetric positive definite
systems with optional Jacobi preconditioning that refuses indefinite
matrices. ``NewtonSolver`` runs Newton-Raphson with Armijo backtracking on
the squared residual 2-norm and records an iteration log.

All solvers are reentrant: no state is shared between solves, and identical
inputs produce identical iteration logs.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "ConjugateGradient",
    "IterationLimitError",
    "LineSearchError",
    "NewtonConvergenceError",
    "NewtonSolver",
    "NotSPDError",
    "SingularSystemError",
    "SolverError",
    "SparseLU",
    "solve_linear",
    "solve_newton",
]


class SolverError(RuntimeError):
    pass


class SingularSystemError(SolverError):
    """Structurally or numerically singular matrix."""


class NotSPDError(SolverError):
    """CG was handed a matrix that is not symmetric positive definite."""


class IterationLimitError(SolverError):
    """An iterative method hit its iteration budget before converging."""


class LineSearchError(SolverError):
    """Backtracking reduced the step below the smallest allowed size."""


class NewtonConvergenceError(SolverError):
    """Newton failed; carries the iteration log gathered so far."""

    def __init__(self, message, log):
        super().__init__(message)
        self.log = log


def _check_system(A, b):
    m, n = A.shape
    if m != n:
        raise ValueError(f"matrix must be square, got {A.shape}")
    if b.shape != (n,):
        raise ValueError(f"right hand side length {b.shape} does not match {n}")


class SparseLU:
    """Direct solver: sparse LU with partial pivoting.

    ``permc_spec`` selects the fill-reducing column ordering; "NATURAL"
    disables it (kept for band systems and for auditing the factorization).
    """

    def __init__(self, permc_spec="COLAMD"):
        self.permc_spec = permc_spec

    def solve(self, A, b):
        b = np.asarray(b, dtype=float)
        _check_system(A, b)
        if b.size == 0:
            return np.zeros(0)
        try:
            lu = spla.splu(sp.csc_matrix(A), permc_spec=self.permc_spec)
            x = lu.solve(b)
        except RuntimeError as exc:  # SuperLU reports the zero pivot index
            raise SingularSystemError(f"sparse LU failed: {exc}") from None
        if not np.all(np.isfinite(x)):
            raise SingularSystemError("sparse LU produced non-finite values")
        return x


class ConjugateGradient:
    """Conjugate gradients for SPD systems (optional Jacobi preconditioner).

    Symmetry is spot-checked on sampled entries; a non-positive diagonal or
    a non-positive curvature p'Ap during the iteration raises
    :class:`NotSPDError` rather than silently iterating on an indefinite
    system.
    """

    def __init__(self, rtol=1e-10, maxiter=None, jacobi=True):
        self.rtol = rtol
        self.maxiter = maxiter
        self.jacobi = jacobi

    def _check_symmetry(self, A):
        A = sp.csr_matrix(A)
        coo = A.tocoo()
        if coo.nnz == 0:
            return
        rng = np.random.default_rng(0)
        k = min(200, coo.nnz)
        sel = rng.choice(coo.nnz, size=k, replace=False)
        scale = 1.0 + float(np.max(np.abs(coo.data[sel])))
        for i, j in zip(coo.row[sel], coo.col[sel]):
            if abs(A[i, j] - A[j, i]) > 1e-10 * scale:
                raise NotSPDError(f"matrix is not symmetric at entry ({i}, {j})")

    def solve(self, A, b):
        b = np.asarray(b, dtype=float)
        _check_system(A, b)
        n = len(b)
        if n == 0:
            return np.zeros(0)
        self._check_symmetry(A)
        diag = A.diagonal()
        if np.any(diag <= 0):
            raise NotSPDError("matrix has non-positive diagonal entries")
        minv = 1.0 / diag if self.jacobi else np.ones(n)
        maxiter = self.maxiter if self.maxiter is not None else 10 * n
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            return np.zeros(n)
        x = np.zeros(n)
        r = b.copy()
        z = minv * r
        p = z.copy()
        rz = r @ z
        for _ in range(maxiter):
            if np.linalg.norm(r) <= self.rtol * bnorm:
                return x
            Ap = A @ p
            pAp = p @ Ap
            if pAp <= 0.0:
                raise NotSPDError("non-positive curvature: matrix is not SPD")
            alpha = rz / pAp
            x += alpha * p
            r -= alpha * Ap
            z = minv * r
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        if np.linalg.norm(r) <= self.rtol * bnorm:
            return x
        raise IterationLimitError(
            f"CG did not converge in {maxiter} iterations "
            f"(relative residual {np.linalg.norm(r) / bnorm:.3e})"
        )


def solve_linear(A, b, solver=None):
    """Solve a sparse linear system with the given solver (default SparseLU)."""
    if solver is None:
        solver = SparseLU()
    return solver.solve(A, np.asarray(b, dtype=float))


class NewtonSolver:
    """Newton-Raphson with Armijo backtracking line search.

    Stops when the residual max-norm drops below ``tol``; each accepted step
    is logged as (iteration, residual max-norm, step length). The merit
    function for the line search is the squared residual 2-norm.
    """

    def __init__(
        self,
        linear_solver=None,
        tol=1e-8,
        max_iterations=20,
        armijo_c=1e-4,
        shrink=0.5,
        max_backtracks=25,
        trace=False,
    ):
        self.linear_solver = linear_solver if linear_solver is not None else SparseLU()
        self.tol = tol
        self.max_iterations = max_iterations
        self.armijo_c = armijo_c
        self.shrink = shrink
        self.max_backtracks = max_backtracks
        self.trace = trace

    def solve(self, op, x0):
        """Iterate from the FE function ``x0``; returns (solution, log)."""
        log = []
        x = np.array(x0.free_values if hasattr(x0, "free_values") else x0, dtype=float)
        xh = op.make_function(x)
        r = op.residual(xh)
        alpha = None
        for it in range(self.max_iterations + 1):
            rnorm = float(np.max(np.abs(r))) if len(r) else 0.0
            log.append((it, rnorm, alpha))
            if self.trace:
                a = "" if alpha is None else f" alpha={alpha:g}"
                print(f"newton: iter={it} |r|inf={rnorm:.6e}{a}", flush=True)
            if rnorm < self.tol:
                return xh, log
            if it == self.max_iterations:
                break
            J = op.jacobian(xh)
            delta = self.linear_solver.solve(J, -r)
            phi0 = 0.5 * float(r @ r)
            alpha = 1.0
            accepted = False
            for _ in range(self.max_backtracks + 1):
                x_try = x + alpha * delta
                xh_try = op.make_function(x_try)
                r_try = op.residual(xh_try)
                phi = 0.5 * float(r_try @ r_try)
                if phi <= (1.0 - 2.0 * self.armijo_c * alpha) * phi0:
                    accepted = True
                    break
                alpha *= self.shrink
            if not accepted:
                raise LineSearchError(
                    f"line search failed at iteration {it} "
                    f"(merit {phi0:.3e}, smallest step {alpha:g})"
                )
            x, xh, r = x_try, xh_try, r_try
        raise NewtonConvergenceError(
            f"Newton did not reach |r|inf < {self.tol:g} in "
            f"{self.max_iterations} iterations (last |r|inf = {log[-1][1]:.3e})",
            log,
        )


def solve_newton(op, x0, solver=None, **kwargs):
    """Convenience wrapper around :class:`NewtonSolver`."""
    newton = solver if isinstance(solver, NewtonSolver) else NewtonSolver(solver, **kwargs)
    return newton.solve(op, x0)
