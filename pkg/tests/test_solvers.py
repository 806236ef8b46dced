import numpy as np
import pytest
import scipy.sparse as sp

import cartfem as cf
from cartfem.reffe import HDIV, L2
from cartfem.solvers import (
    IterationLimitError,
    NewtonConvergenceError,
    NotSPDError,
    SingularSystemError,
)

RNG = np.random.default_rng(1234)


def dense_elimination(A, b):
    """Independent oracle: dense Gaussian elimination with partial pivoting."""
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    n = len(b)
    for k in range(n):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        if A[p, k] == 0.0:
            raise ZeroDivisionError("singular")
        if p != k:
            A[[k, p]] = A[[p, k]]
            b[[k, p]] = b[[p, k]]
        for i in range(k + 1, n):
            m = A[i, k] / A[k, k]
            A[i, k:] -= m * A[k, k:]
            b[i] -= m * b[k]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        x[i] = (b[i] - A[i, i + 1 :] @ x[i + 1 :]) / A[i, i]
    return x


class TestSparseLU:
    def test_identity(self):
        b = RNG.random(7)
        x = cf.solve_linear(sp.identity(7, format="csr"), b)
        np.testing.assert_allclose(x, b)

    def test_2x2_hand_solution(self):
        A = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 3.0]]))
        x = cf.solve_linear(A, np.array([3.0, 5.0]))
        np.testing.assert_allclose(x, [4.0 / 5.0, 7.0 / 5.0], atol=1e-14)

    @pytest.mark.parametrize("n", [5, 40, 200])
    def test_random_systems_match_dense_oracle(self, n):
        for trial in range(3):
            dense = RNG.standard_normal((n, n)) + n * np.eye(n)
            dense[np.abs(dense) < 0.8] = 0.0  # sparsify off-diagonals
            b = RNG.standard_normal(n)
            x = cf.solve_linear(sp.csr_matrix(dense), b)
            x_ref = dense_elimination(dense, b)
            scale = np.max(np.abs(x_ref)) + 1.0
            assert np.max(np.abs(x - x_ref)) / scale < 1e-8

    def test_random_spd_systems(self):
        n = 120
        B = RNG.standard_normal((n, n))
        dense = B @ B.T + n * np.eye(n)  # condition well below 1e6
        b = RNG.standard_normal(n)
        x = cf.solve_linear(sp.csr_matrix(dense), b)
        x_ref = dense_elimination(dense, b)
        assert np.max(np.abs(x - x_ref)) / (np.max(np.abs(x_ref)) + 1) < 1e-8

    def test_residual_contract(self):
        n = 80
        dense = RNG.standard_normal((n, n)) + n * np.eye(n)
        A = sp.csr_matrix(dense)
        b = RNG.standard_normal(n)
        x = cf.solve_linear(A, b)
        assert np.max(np.abs(A @ x - b)) <= 1e-10 * (1 + np.max(np.abs(b)))

    def test_singular_matrix(self):
        A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 4.0]]))
        with pytest.raises(SingularSystemError):
            cf.solve_linear(A, np.array([1.0, 1.0]))

    def test_shape_validation(self):
        A = sp.csr_matrix(np.ones((3, 2)))
        with pytest.raises(ValueError):
            cf.solve_linear(A, np.ones(2))
        with pytest.raises(ValueError):
            cf.solve_linear(sp.identity(3, format="csr"), np.ones(2))


class TestConjugateGradient:
    def _poisson_system(self, n=8):
        model = cf.cartesian_model((0, 1, 0, 1), (n, n))
        V = cf.test_space(model, "Q", 1, dirichlet_tags=["boundary"])
        U = cf.trial_space(V, 0.0)
        trian = cf.triangulation(model)
        quad = cf.cell_quadrature(trian, 2)
        a = lambda u, v: cf.inner(cf.gradient(v), cf.gradient(u))
        b = lambda v: v * 1.0
        return cf.assemble_affine(U, V, cf.AffineTerm(a, b, trian, quad))

    def test_spd_poisson(self):
        op = self._poisson_system()
        cg = cf.ConjugateGradient(rtol=1e-12)
        x = cg.solve(op.matrix, op.vector)
        x_lu = cf.solve_linear(op.matrix, op.vector)
        assert np.max(np.abs(x - x_lu)) < 1e-9

    def test_refuses_saddle_point(self):
        # Darcy-type block system is indefinite: CG must refuse it
        model = cf.cartesian_model((0, 1, 0, 1), (3, 3))
        V = cf.test_space(model, "RT", 0, conformity=HDIV, dirichlet_tags=[5, 6])
        Q = cf.test_space(model, "Q", 0, conformity=L2)
        X = cf.multifield([cf.trial_space(V, (0.0, 0.0)), cf.trial_space(Q)])
        Y = cf.multifield([V, Q])
        trian = cf.triangulation(model)
        quad = cf.cell_quadrature(trian, 2)

        def a(x, y):
            u, p = x
            v, q = y
            return cf.inner(v, u) - cf.divergence(v) * p + q * cf.divergence(u)

        btrian = cf.boundary_triangulation(model, [8])
        bquad = cf.cell_quadrature(btrian, 2)
        nb = cf.get_normal_vector(btrian)
        bN = lambda y: cf.inner(y[0], nb) * (-1.0)
        op = cf.assemble_affine(
            X, Y, cf.LinearTerm(a, trian, quad), cf.SourceTerm(bN, btrian, bquad)
        )
        x_lu = cf.solve_linear(op.matrix, op.vector)  # LU succeeds
        assert np.all(np.isfinite(x_lu))
        with pytest.raises(NotSPDError):
            cf.ConjugateGradient().solve(op.matrix, op.vector)

    def test_rejects_asymmetric(self):
        A = sp.csr_matrix(np.array([[2.0, 1.0], [0.0, 2.0]]))
        with pytest.raises(NotSPDError):
            cf.ConjugateGradient().solve(A, np.ones(2))

    def test_iteration_limit(self):
        op = self._poisson_system(n=10)
        with pytest.raises(IterationLimitError):
            cf.ConjugateGradient(rtol=1e-14, maxiter=2).solve(op.matrix, op.vector)


class TestNewton:
    def _plap_op(self, model, p):
        V = cf.test_space(model, "Q", 1, dirichlet_tags=["boundary"])
        U = cf.trial_space(V, 0.0)
        trian = cf.triangulation(model)
        quad = cf.cell_quadrature(trian, 2)

        def flux(g):
            return cf.norm(g) ** (p - 2) * g

        def res(u, v):
            return cf.inner(cf.gradient(v), flux(cf.gradient(u))) - v * 1.0

        if p == 2:
            jac = lambda u, du, v: cf.inner(cf.gradient(v), cf.gradient(du))
        else:
            def dflux(dg, g):
                return (p - 2) * cf.norm(g) ** (p - 4) * cf.inner(g, dg) * g + cf.norm(
                    g
                ) ** (p - 2) * dg

            jac = lambda u, du, v: cf.inner(
                cf.gradient(v), dflux(cf.gradient(du), cf.gradient(u))
            )
        return cf.nonlinear_operator(U, V, cf.NonlinearTerm(res, jac, trian, quad))

    def test_linear_problem_converges_in_two_iterations(self):
        op = self._plap_op(cf.cartesian_model((0, 1, 0, 1), (6, 6)), 2.0)
        x0 = op.initial_guess(RNG.random(op.num_free_dofs))
        uh, log = cf.solve_newton(op, x0, tol=1e-8)
        assert len(log) - 1 <= 2
        assert log[-1][1] < 1e-8

    def test_p3_converges_from_random_guess(self):
        op = self._plap_op(cf.cartesian_model((0, 1, 0, 1), (8, 8)), 3.0)
        rng = np.random.default_rng(1234)
        x0 = op.initial_guess(rng.random(op.num_free_dofs))
        uh, log = cf.solve_newton(op, x0, tol=1e-8)
        assert log[-1][1] < 1e-8
        norms = [r for _, r, _ in log]
        assert all(b < a for a, b in zip(norms, norms[1:]))  # monotone decrease

    def test_superlinear_tail(self):
        op = self._plap_op(cf.cartesian_model((0, 1, 0, 1), (8, 8)), 3.0)
        rng = np.random.default_rng(1234)
        x0 = op.initial_guess(rng.random(op.num_free_dofs))
        _, log = cf.solve_newton(op, x0, tol=1e-8)
        norms = [r for _, r, _ in log]
        # loose superlinear check on the last full step
        assert norms[-1] <= max(1e-12, norms[-2] ** 1.2)

    def test_deterministic_logs(self):
        logs = []
        for _ in range(2):
            op = self._plap_op(cf.cartesian_model((0, 1, 0, 1), (6, 6)), 3.0)
            rng = np.random.default_rng(1234)
            x0 = op.initial_guess(rng.random(op.num_free_dofs))
            _, log = cf.solve_newton(op, x0, tol=1e-8)
            logs.append(log)
        assert logs[0] == logs[1]

    def test_iteration_budget_raises_with_log(self):
        op = self._plap_op(cf.cartesian_model((0, 1, 0, 1), (6, 6)), 3.0)
        x0 = op.initial_guess(RNG.random(op.num_free_dofs))
        with pytest.raises(NewtonConvergenceError) as err:
            cf.solve_newton(op, x0, tol=1e-8, max_iterations=1)
        assert len(err.value.log) == 2

    def test_trace_output(self, capsys):
        op = self._plap_op(cf.cartesian_model((0, 1, 0, 1), (4, 4)), 2.0)
        cf.solve_newton(op, op.initial_guess(), tol=1e-8, trace=True)
        out = capsys.readouterr().out
        assert "newton: iter=0" in out
