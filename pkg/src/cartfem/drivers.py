"""Model-problem drivers shared by the command line tool and the test suite.

Each ``run_*`` function builds its mesh (or loads one from the native
format), assembles and solves the problem, optionally writes VTK output
under an ``out`` prefix, and returns an ordered summary dict of
reproducible key/value pairs. Geometry for the conforming tutorials is a
tagged Cartesian box: the clamped/loaded regions of the original curved
geometries become closed box sides.

Default parameters: Poisson f=1, g=2 with flux data 3 on the designated
sides; elasticity E=70e9, nu=0.33 with a 0.005 normal pull; p-Laplacian
p=3, f=1, g=2 seeded with uniform random nodal values (seed 1234); DG
n=4, order=3 with the linear manufactured solution; Darcy n=32 (flag
``paper_scale`` restores 100); cavity Re=10, n=32, order 2.
"""

from __future__ import annotations

import numpy as np

from .cellfield import (
    Constant,
    analytic,
    divergence,
    gradient,
    inner,
    integrate,
    jump,
    make_contexts,
    matvec,
    mean,
    norm,
    physical_coordinate,
    pointwise_law,
    restrict,
    symmetric_gradient,
    trace,
    transpose,
)
from .fespace import (
    interpolate,
    multifield,
    test_space,
    trial_space,
    zero_mean_postshift,
)
from .geometry import (
    boundary_triangulation,
    cell_quadrature,
    get_normal_vector,
    skeleton_triangulation,
    triangulation,
)
from .mesh import cartesian_model, read_model
from .operators import (
    AffineTerm,
    LinearTerm,
    NonlinearTerm,
    SourceTerm,
    assemble_affine,
    nonlinear_operator,
)
from .postprocess import error_norms, slope, write_vtk
from .reffe import HDIV, L2
from .solvers import ConjugateGradient, NewtonSolver, SparseLU

__all__ = [
    "DriverError",
    "run_cavity",
    "run_convergence",
    "run_darcy",
    "run_dg",
    "run_elasticity",
    "run_plaplacian",
    "run_poisson",
]


class DriverError(RuntimeError):
    """A driver-level acceptance check failed."""


def _model(mesh, box, partition):
    if mesh is not None:
        return read_model(mesh)
    return cartesian_model(box, partition)


def _ensure_tag(model, name, entity_ids):
    """Add a driver tag unless the mesh file already defines it."""
    if name in model.labels.tags:
        return model
    return model.with_labels(model.labels.with_tag(name, entity_ids))


def _linear_solver(name):
    if name == "cg":
        return ConjugateGradient(rtol=1e-12)
    return SparseLU()


def _max_abs_on(field, trian, quad):
    out = 0.0
    for _, ctx in make_contexts(trian, quad):
        out = max(out, float(np.max(np.abs(field.evaluate(ctx)))))
    return out


def _fd_jacobian_error(op, x, eps=1e-7):
    """Columnwise finite-difference check of the assembled Jacobian."""
    J = op.jacobian(op.make_function(x)).toarray()
    r0 = op.residual(op.make_function(x))
    Jfd = np.empty_like(J)
    for j in range(len(x)):
        xp = x.copy()
        xp[j] += eps
        Jfd[:, j] = (op.residual(op.make_function(xp)) - r0) / eps
    scale = np.max(np.abs(J))
    return float(np.max(np.abs(J - Jfd)) / scale)


# -- Poisson ---------------------------------------------------------------


def run_poisson(
    n=16,
    dim=2,
    order=1,
    degree=None,
    f=1.0,
    g=2.0,
    flux=3.0,
    out=None,
    mesh=None,
    solver="lu",
    threads=1,
):
    """Poisson with Dirichlet sides and inhomogeneous flux data.

    The Dirichlet boundary is the closure of the two x-normal sides; the
    flux (Neumann) value applies on the y-normal sides, the remaining
    boundary being homogeneous (omitted from the weak form).
    """
    model = _model(mesh, (0.0, 1.0) * dim, (n,) * dim)
    dim = model.dim
    sides = model.side_closure_entities(0, 0) + model.side_closure_entities(0, 1)
    model = _ensure_tag(model, "sides", sorted(set(sides)))
    ymin = [e for e in model.side_closure_entities(1, 0) if e not in sides]
    ymax = [e for e in model.side_closure_entities(1, 1) if e not in sides]
    model = _ensure_tag(model, "flux_sides", sorted(set(ymin + ymax)))

    V = test_space(model, "Q", order, dirichlet_tags=["sides"])
    U = trial_space(V, g)
    trian = triangulation(model)
    deg = degree if degree is not None else 2 * order
    quad = cell_quadrature(trian, deg)
    btrian = boundary_triangulation(model, ["flux_sides"])
    bquad = cell_quadrature(btrian, deg)

    a = lambda u, v: inner(gradient(v), gradient(u))
    b = lambda v: v * f
    bG = lambda v: v * flux
    op = assemble_affine(
        U,
        V,
        AffineTerm(a, b, trian, quad),
        SourceTerm(bG, btrian, bquad),
        threads=threads,
    )
    uh = op.solve(_linear_solver(solver))

    if out:
        write_vtk(trian, f"{out}.vtk", {"uh": uh})
    summary = {
        "driver": "poisson",
        "dim": dim,
        "n": n,
        "order": order,
        "degree": deg,
        "free_dofs": V.num_free_dofs,
        "f": f,
        "g": g,
        "flux": flux,
        "uh_min": float(uh.raw_values.min()),
        "uh_max": float(uh.raw_values.max()),
    }
    return summary, uh


# -- linear elasticity --------------------------------------------------------


def run_elasticity(
    n=8,
    order=1,
    degree=None,
    young=70.0e9,
    poisson_ratio=0.33,
    delta=0.005,
    out=None,
    mesh=None,
    threads=1,
):
    """Vector elasticity on a unit cube: one side clamped, the opposite side
    pulled by ``delta`` in its normal direction (only that component fixed)."""
    model = _model(mesh, (0.0, 1.0) * 3, (n,) * 3)
    if model.dim != 3:
        raise DriverError("the elasticity driver is three dimensional")
    model = _ensure_tag(model, "clamped", model.side_closure_entities(0, 0))
    model = _ensure_tag(model, "pulled", model.side_closure_entities(0, 1))

    E, nu = young, poisson_ratio
    lam = (E * nu) / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))

    V = test_space(
        model,
        "Q",
        order,
        ncomp=3,
        dirichlet_tags=["pulled", "clamped"],
        dirichlet_masks=[(True, False, False), (True, True, True)],
    )
    U = trial_space(V, [(delta, 0.0, 0.0), (0.0, 0.0, 0.0)])
    trian = triangulation(model)
    deg = degree if degree is not None else 2 * order
    quad = cell_quadrature(trian, deg)
    eye = Constant(np.eye(3))

    def sigma(e):
        return lam * trace(e) * eye + 2 * mu * e

    a = lambda u, v: inner(symmetric_gradient(v), sigma(symmetric_gradient(u)))
    op = assemble_affine(U, V, LinearTerm(a, trian, quad), threads=threads)
    uh = op.solve()

    sig = sigma(symmetric_gradient(uh))
    asym = _max_abs_on(sig - transpose(sig), trian, quad)
    sig_scale = max(_max_abs_on(sig, trian, quad), 1.0)
    if out:
        write_vtk(
            trian,
            f"{out}.vtk",
            {"uh": uh, "epsi": symmetric_gradient(uh), "sigma": sig},
        )
    summary = {
        "driver": "elasticity",
        "n": n,
        "order": order,
        "degree": deg,
        "free_dofs": V.num_free_dofs,
        "young": young,
        "poisson_ratio": poisson_ratio,
        "delta": delta,
        "lambda": lam,
        "mu": mu,
        "ux_max": float(uh.raw_values[0::3].max()),
        "sigma_asymmetry_rel": asym / sig_scale,
    }
    return summary, uh


# -- p-Laplacian ---------------------------------------------------------------


def plaplacian_forms(p, f):
    """Residual and Jacobian integrands of the p-Laplacian.

    At p == 2 the flux linearization collapses to the plain Laplacian; the
    general formula is skipped there because its |grad u|^(p-4) factor is
    singular for vanishing gradients.
    """

    def flux(gu):
        return norm(gu) ** (p - 2) * gu

    def res(u, v):
        return inner(gradient(v), flux(gradient(u))) - v * f

    if p == 2:
        def jac(u, du, v):
            return inner(gradient(v), gradient(du))
    else:
        def dflux(dgu, gu):
            return (p - 2) * norm(gu) ** (p - 4) * inner(gu, dgu) * gu + norm(gu) ** (
                p - 2
            ) * dgu

        def jac(u, du, v):
            return inner(gradient(v), dflux(gradient(du), gradient(u)))

    return res, jac


def run_plaplacian(
    n=16,
    dim=2,
    order=1,
    degree=None,
    p=3.0,
    f=1.0,
    g=2.0,
    tol=1e-8,
    max_iters=20,
    seed=1234,
    out=None,
    mesh=None,
    trace_newton=False,
    check_jacobian=False,
    threads=1,
):
    """p-Laplacian with a zero side and a loaded side, solved by Newton from
    a seeded random initial guess."""
    model = _model(mesh, (0.0, 1.0) * dim, (n,) * dim)
    model = _ensure_tag(model, "diri0", model.side_closure_entities(0, 0))
    model = _ensure_tag(model, "dirig", model.side_closure_entities(0, 1))

    V = test_space(model, "Q", order, dirichlet_tags=["diri0", "dirig"])
    U = trial_space(V, [0.0, g])
    trian = triangulation(model)
    deg = degree if degree is not None else 2 * order
    quad = cell_quadrature(trian, deg)
    res, jac = plaplacian_forms(p, f)
    op = nonlinear_operator(U, V, NonlinearTerm(res, jac, trian, quad), threads=threads)

    rng = np.random.default_rng(seed)
    x0 = op.initial_guess(rng.random(op.num_free_dofs))
    newton = NewtonSolver(tol=tol, max_iterations=max_iters, trace=trace_newton)
    uh, log = newton.solve(op, x0)

    summary = {
        "driver": "plaplacian",
        "dim": model.dim,
        "n": n,
        "order": order,
        "degree": deg,
        "p": p,
        "f": f,
        "g": g,
        "seed": seed,
        "free_dofs": V.num_free_dofs,
        "newton_iterations": len(log) - 1,
        "residual_inf": log[-1][1],
    }
    if check_jacobian:
        x = 0.5 + rng.random(op.num_free_dofs)
        summary["fd_jacobian_rel_err"] = _fd_jacobian_error(op, x)
    if out:
        write_vtk(trian, f"{out}.vtk", {"uh": uh})
    return summary, uh, log


# -- interior penalty DG ---------------------------------------------------------


def dg_manufactured(dim):
    """Linear manufactured solution 3x + y (+ 2z in 3D) and its gradient."""
    coef = np.array([3.0, 1.0, 2.0][:dim])

    def u(x):
        return x @ coef

    def gu(x):
        return np.broadcast_to(coef, x.shape)

    return analytic(u, grad=gu)


def run_dg(
    n=4,
    dim=3,
    order=3,
    degree=None,
    tol=1e-10,
    out=None,
    mesh=None,
    threads=1,
):
    """Symmetric interior penalty discretization of Poisson with a linear
    manufactured solution; discretization errors must sit at round-off."""
    model = _model(mesh, (0.0, 1.0) * dim, (n,) * dim)
    dim = model.dim
    uex = dg_manufactured(dim)

    V = test_space(model, "Q", order, conformity=L2)
    U = trial_space(V)
    trian = triangulation(model)
    btrian = boundary_triangulation(model)
    strian = skeleton_triangulation(model)
    deg = degree if degree is not None else 2 * order
    quad = cell_quadrature(trian, deg)
    bquad = cell_quadrature(btrian, deg)
    squad = cell_quadrature(strian, deg)
    nb = get_normal_vector(btrian)
    ns = get_normal_vector(strian)

    h = float((model.hi[0] - model.lo[0]) / model.partition[0])
    gamma = order * (order + 1)

    a_vol = lambda u, v: inner(gradient(v), gradient(u))
    b_vol = lambda v: v * 0.0
    a_bnd = (
        lambda u, v: (gamma / h) * (v * u)
        - v * inner(gradient(u), nb)
        - inner(gradient(v), nb) * u
    )
    b_bnd = lambda v: (gamma / h) * (v * uex) - inner(gradient(v), nb) * uex
    a_skel = (
        lambda u, v: (gamma / h) * inner(jump(v * ns), jump(u * ns))
        - inner(jump(v * ns), mean(gradient(u)))
        - inner(mean(gradient(v)), jump(u * ns))
    )

    op = assemble_affine(
        U,
        V,
        AffineTerm(a_vol, b_vol, trian, quad),
        AffineTerm(a_bnd, b_bnd, btrian, bquad),
        LinearTerm(a_skel, strian, squad),
        threads=threads,
    )
    uh = op.solve()

    el2, eh1 = error_norms(uex - uh, trian, quad)
    juh = jump(restrict(uh, strian))
    max_jump = _max_abs_on(juh, strian, squad)
    if out:
        write_vtk(trian, f"{out}.vtk", {"uh": uh})
        write_vtk(strian, f"{out}_jumps.vtk", {"jump_uh": juh})
    summary = {
        "driver": "dg",
        "dim": dim,
        "n": n,
        "order": order,
        "degree": deg,
        "gamma": gamma,
        "h": h,
        "free_dofs": V.num_free_dofs,
        "el2": el2,
        "eh1": eh1,
        "max_jump": max_jump,
        "tol": tol,
    }
    if el2 >= tol or eh1 >= tol:
        raise DriverError(
            f"DG manufactured-solution errors exceed tol={tol:g}: "
            f"el2={el2:.3e} eh1={eh1:.3e}"
        )
    return summary, uh


# -- Darcy (Raviart-Thomas) -------------------------------------------------------


def darcy_permeability_law(homogeneous=False):
    """Pointwise inverse-permeability application kinv(x) u.

    kinv is the anisotropic block (100, 90; 90, 100) inside the centered
    square [0.4, 0.6]^2 and the identity elsewhere.
    """
    kinv2 = np.array([[100.0, 90.0], [90.0, 100.0]])

    def law(x, u):
        if homogeneous:
            return u
        inside = (np.abs(x[..., 0] - 0.5) <= 0.1) & (np.abs(x[..., 1] - 0.5) <= 0.1)
        return np.where(inside[..., None], u @ kinv2.T, u)

    return law


def run_darcy(
    n=32,
    degree=2,
    homogeneous=False,
    paper_scale=False,
    out=None,
    mesh=None,
    threads=1,
):
    """Mixed Darcy flow: lowest-order Raviart-Thomas flux with piecewise
    constant pressure, no-flow top/bottom, unit pressure drop left to right."""
    if paper_scale:
        n = 100
    model = _model(mesh, (0.0, 1.0, 0.0, 1.0), (n, n))
    if model.dim != 2:
        raise DriverError("the Darcy driver is two dimensional")

    V = test_space(model, "RT", 0, conformity=HDIV, dirichlet_tags=[5, 6])
    Q = test_space(model, "Q", 0, conformity=L2)
    U = trial_space(V, (0.0, 0.0))
    P = trial_space(Q)
    X = multifield([U, P])
    Y = multifield([V, Q])

    trian = triangulation(model)
    quad = cell_quadrature(trian, degree)
    btrian = boundary_triangulation(model, [8])
    bquad = cell_quadrature(btrian, degree)
    nb = get_normal_vector(btrian)
    law = darcy_permeability_law(homogeneous)
    px = physical_coordinate()

    def a(x, y):
        u, p = x
        v, q = y
        return inner(v, pointwise_law(law, px, u)) - divergence(v) * p + q * divergence(u)

    def b_neumann(y):
        v, q = y
        return inner(v, nb) * (-1.0)

    op = assemble_affine(
        X,
        Y,
        LinearTerm(a, trian, quad),
        SourceTerm(b_neumann, btrian, bquad),
        threads=threads,
    )
    xh = op.solve()
    uh, ph = xh.unpack()

    flux_bc_max = float(np.max(np.abs(uh.raw_values[V.constrained_to_raw])))
    summary = {
        "driver": "darcy",
        "n": n,
        "homogeneous": homogeneous,
        "degree": degree,
        "flux_dofs": V.num_free_dofs,
        "pressure_dofs": Q.num_free_dofs,
        "flux_bc_max": flux_bc_max,
    }
    if homogeneous:
        uex = analytic(
            lambda x: np.broadcast_to(np.array([-1.0, 0.0]), x.shape), value_shape=(2,)
        )
        # the exact pressure x_1 is linear: its cell averages coincide with
        # the piecewise constant representation the pressure space can carry
        pex = interpolate(Q, lambda x: x[..., 0])
        eu = float(np.sqrt(np.sum(integrate(inner(uex - uh, uex - uh), trian, quad))))
        ep = float(np.sqrt(np.sum(integrate((pex - ph) * (pex - ph), trian, quad))))
        ep_analytic = float(
            np.sqrt(
                np.sum(
                    integrate(
                        (analytic(lambda x: x[..., 0]) - ph)
                        * (analytic(lambda x: x[..., 0]) - ph),
                        trian,
                        cell_quadrature(trian, 4),
                    )
                )
            )
        )
        summary["flux_l2_error"] = eu
        summary["pressure_l2_error"] = ep
        summary["pressure_l2_distance_to_x1"] = ep_analytic
    if out:
        write_vtk(trian, f"{out}.vtk", {"uh": uh, "ph": ph})
    return summary, uh, ph


# -- lid-driven cavity -------------------------------------------------------------


def cavity_forms(reynolds):
    """Residual/Jacobian integrands of steady incompressible Navier-Stokes
    with the convection term scaled by the Reynolds number."""

    def conv(u, gu):
        return reynolds * matvec(gu, u)

    def a(x, y):
        u, p = x
        v, q = y
        return inner(gradient(v), gradient(u)) - divergence(v) * p + q * divergence(u)

    def res(x, y):
        u, p = x
        v, q = y
        return a(x, y) + inner(v, conv(u, gradient(u)))

    def jac(x, dx, y):
        u, p = x
        du, dp = dx
        v, q = y
        dconv = conv(u, gradient(du)) + conv(du, gradient(u))
        return a(dx, y) + inner(v, dconv)

    return res, jac


def run_cavity(
    n=32,
    order=2,
    degree=None,
    reynolds=10.0,
    tol=1e-8,
    max_iters=20,
    out=None,
    mesh=None,
    trace_newton=False,
    check_jacobian=False,
    threads=1,
):
    """Lid-driven cavity with Q_k velocities and discontinuous P_(k-1)
    zero-mean pressure, Newton from a zero initial guess."""
    model = _model(mesh, (0.0, 1.0, 0.0, 1.0), (n, n))
    if model.dim != 2:
        raise DriverError("the cavity driver is two dimensional")
    model = _ensure_tag(model, "diri1", [6])
    model = _ensure_tag(model, "diri0", [1, 2, 3, 4, 5, 7, 8])

    V = test_space(model, "Q", order, ncomp=2, dirichlet_tags=["diri0", "diri1"])
    Q = test_space(model, "P", order - 1, conformity=L2, constraint="zeromean")
    U = trial_space(V, [(0.0, 0.0), (1.0, 0.0)])
    P = trial_space(Q)
    X = multifield([U, P])
    Y = multifield([V, Q])

    trian = triangulation(model)
    deg = degree if degree is not None else (order - 1) * 2
    quad = cell_quadrature(trian, deg)
    res, jac = cavity_forms(reynolds)
    op = nonlinear_operator(X, Y, NonlinearTerm(res, jac, trian, quad), threads=threads)

    newton = NewtonSolver(tol=tol, max_iterations=max_iters, trace=trace_newton)
    xh, log = newton.solve(op, op.initial_guess())
    uh, ph = xh.unpack()
    pquad = cell_quadrature(trian, 2 * order)
    ph = zero_mean_postshift(ph, trian, pquad)

    mean_p = float(np.sum(integrate(ph, trian, pquad)))
    div_l2 = float(np.sqrt(np.sum(integrate(divergence(uh) * divergence(uh), trian, pquad))))
    lid = V.constrained_tag_idx == 1  # diri1 is the second dirichlet tag
    lid_raw = V.constrained_to_raw[lid]
    lid_vals = U.dirichlet_values[lid]
    lid_ok = bool(
        np.all(lid_vals[lid_raw % 2 == 0] == 1.0)
        and np.all(lid_vals[lid_raw % 2 == 1] == 0.0)
    )

    summary = {
        "driver": "cavity",
        "n": n,
        "order": order,
        "degree": deg,
        "reynolds": reynolds,
        "velocity_dofs": V.num_free_dofs,
        "pressure_dofs": Q.num_free_dofs,
        "newton_iterations": len(log) - 1,
        "residual_inf": log[-1][1],
        "pressure_mean": mean_p,
        "div_u_l2": div_l2,
        "lid_dofs_exact": lid_ok,
    }
    if check_jacobian:
        rng = np.random.default_rng(1234)
        x = 0.1 * rng.standard_normal(op.num_free_dofs)
        summary["fd_jacobian_rel_err"] = _fd_jacobian_error(op, x)
    if out:
        write_vtk(trian, f"{out}.vtk", {"uh": uh, "ph": ph})
    return summary, uh, ph, log


# -- convergence study ----------------------------------------------------------


def convergence_manufactured():
    """Smooth manufactured solution sin(2 pi x) y with source and gradient."""
    k = 2 * np.pi

    def u(x):
        return np.sin(k * x[..., 0]) * x[..., 1]

    def gu(x):
        return np.stack(
            [k * np.cos(k * x[..., 0]) * x[..., 1], np.sin(k * x[..., 0])], axis=-1
        )

    def f(x):
        return k**2 * np.sin(k * x[..., 0]) * x[..., 1]

    return analytic(u, grad=gu), f


def run_convergence(
    ns=(8, 16, 32, 64),
    order=2,
    degree=None,
    out=None,
    solver="lu",
    threads=1,
):
    """Poisson convergence study against the smooth manufactured solution.

    Runs the full-Dirichlet problem per mesh and regresses the L2/H1 error
    slopes in log-log; error integrals use a slightly richer quadrature than
    the assembly so the regression measures the discretization alone.
    """
    ns = list(ns)
    if len(ns) < 3:
        raise DriverError("convergence studies need at least 3 mesh sizes")
    uex, f = convergence_manufactured()
    deg = degree if degree is not None else 2 * order
    err_deg = deg + 2
    hs, el2s, eh1s = [], [], []
    for n in ns:
        model = cartesian_model((0.0, 1.0, 0.0, 1.0), (n, n))
        V = test_space(model, "Q", order, dirichlet_tags=["boundary"])
        U = trial_space(V, lambda x: np.sin(2 * np.pi * x[..., 0]) * x[..., 1])
        trian = triangulation(model)
        quad = cell_quadrature(trian, deg)
        a = lambda u, v: inner(gradient(v), gradient(u))
        b = lambda v: v * analytic(f)
        op = assemble_affine(U, V, AffineTerm(a, b, trian, quad), threads=threads)
        uh = op.solve(_linear_solver(solver))
        el2, eh1 = error_norms(uex - uh, trian, cell_quadrature(trian, err_deg))
        hs.append(1.0 / n)
        el2s.append(el2)
        eh1s.append(eh1)

    slope_l2 = slope(hs, el2s)
    slope_h1 = slope(hs, eh1s)
    summary = {
        "driver": "convergence",
        "order": order,
        "degree": deg,
        "ns": ",".join(str(n) for n in ns),
        "slope_l2": slope_l2,
        "slope_h1": slope_h1,
    }
    for h, e2, e1 in zip(hs, el2s, eh1s):
        summary[f"el2_h={h!r}"] = e2
        summary[f"eh1_h={h!r}"] = e1
    table = list(zip(hs, el2s, eh1s))
    return summary, table, (slope_l2, slope_h1)
