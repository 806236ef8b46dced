"""Command line entry point: one subcommand per model problem.

Every run prints a machine-parseable summary of ``key=value`` lines (and
writes the same lines to ``PREFIX.summary`` when ``--out`` is given, next
to the VTK output). Exit status is 0 on success and 1 on any solver or
acceptance failure. Summaries contain no timestamps, so identical flags
reproduce identical files.
"""

from __future__ import annotations

import argparse
import sys

from . import drivers
from .drivers import DriverError
from .solvers import SolverError


def _common(parser, n=None, order=None):
    parser.add_argument("--n", type=int, default=n, help="cells per axis")
    parser.add_argument("--order", type=int, default=order, help="polynomial order")
    parser.add_argument("--degree", type=int, default=None, help="quadrature degree override")
    parser.add_argument("--tol", type=float, default=None, help="tolerance override")
    parser.add_argument("--max-iters", type=int, default=20, help="Newton iteration budget")
    parser.add_argument("--seed", type=int, default=1234, help="random seed")
    parser.add_argument("--out", default=None, metavar="PREFIX", help="output file prefix")
    parser.add_argument("--mesh", default=None, metavar="PATH", help="native mesh file")
    parser.add_argument("--threads", type=int, default=1, help="assembly threads")
    parser.add_argument("--check-jacobian", action="store_true", help="finite-difference Jacobian check")
    parser.add_argument("--trace", action="store_true", help="print Newton iterations")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cartfem",
        description="Finite element model problems on Cartesian meshes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("poisson", help="Poisson with Dirichlet sides and flux data")
    _common(p, n=16, order=1)
    p.add_argument("--dim", type=int, default=2, choices=(2, 3))
    p.add_argument("--f", type=float, default=1.0, help="volume source")
    p.add_argument("--g", type=float, default=2.0, help="Dirichlet value")
    p.add_argument("--flux", type=float, default=3.0, help="boundary flux value")
    p.add_argument("--solver", choices=("lu", "cg"), default="lu")

    p = sub.add_parser("elasticity", help="linear elasticity, clamped and pulled sides")
    _common(p, n=8, order=1)
    p.add_argument("--young", type=float, default=70.0e9)
    p.add_argument("--poisson-ratio", type=float, default=0.33)
    p.add_argument("--delta", type=float, default=0.005, help="prescribed displacement")

    p = sub.add_parser("plaplacian", help="p-Laplacian solved by Newton")
    _common(p, n=16, order=1)
    p.add_argument("--dim", type=int, default=2, choices=(2, 3))
    p.add_argument("--p", type=float, default=3.0, dest="p_exponent")
    p.add_argument("--f", type=float, default=1.0)
    p.add_argument("--g", type=float, default=2.0)

    p = sub.add_parser("dg", help="interior penalty DG with manufactured solution")
    _common(p, n=4, order=3)
    p.add_argument("--dim", type=int, default=3, choices=(2, 3))

    p = sub.add_parser("darcy", help="Raviart-Thomas mixed Darcy flow")
    _common(p, n=32, order=0)
    p.add_argument("--homogeneous", action="store_true", help="identity permeability")
    p.add_argument("--paper-scale", action="store_true", help="run the 100x100 mesh")

    p = sub.add_parser("cavity", help="lid-driven incompressible Navier-Stokes")
    _common(p, n=32, order=2)
    p.add_argument("--re", type=float, default=10.0, dest="reynolds")

    p = sub.add_parser("convergence", help="Poisson convergence-rate study")
    _common(p, order=2)
    p.add_argument("--ns", default="8,16,32,64", help="comma separated mesh sizes")
    p.add_argument("--solver", choices=("lu", "cg"), default="lu")

    return parser


def _emit(summary, out):
    lines = [f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}" for k, v in summary.items()]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if out:
        with open(f"{out}.summary", "w") as f:
            f.write(text)


def _dispatch(args):
    cmd = args.command
    if cmd == "poisson":
        summary, _ = drivers.run_poisson(
            n=args.n,
            dim=args.dim,
            order=args.order,
            degree=args.degree,
            f=args.f,
            g=args.g,
            flux=args.flux,
            out=args.out,
            mesh=args.mesh,
            solver=args.solver,
            threads=args.threads,
        )
    elif cmd == "elasticity":
        summary, _ = drivers.run_elasticity(
            n=args.n,
            order=args.order,
            degree=args.degree,
            young=args.young,
            poisson_ratio=args.poisson_ratio,
            delta=args.delta,
            out=args.out,
            mesh=args.mesh,
            threads=args.threads,
        )
    elif cmd == "plaplacian":
        summary, _, _ = drivers.run_plaplacian(
            n=args.n,
            dim=args.dim,
            order=args.order,
            degree=args.degree,
            p=args.p_exponent,
            f=args.f,
            g=args.g,
            tol=args.tol if args.tol is not None else 1e-8,
            max_iters=args.max_iters,
            seed=args.seed,
            out=args.out,
            mesh=args.mesh,
            trace_newton=args.trace,
            check_jacobian=args.check_jacobian,
            threads=args.threads,
        )
    elif cmd == "dg":
        summary, _ = drivers.run_dg(
            n=args.n,
            dim=args.dim,
            order=args.order,
            degree=args.degree,
            tol=args.tol if args.tol is not None else 1e-10,
            out=args.out,
            mesh=args.mesh,
            threads=args.threads,
        )
    elif cmd == "darcy":
        if args.order != 0:
            raise DriverError(
                "only the lowest-order flux space is implemented (--order 0)"
            )
        summary, _, _ = drivers.run_darcy(
            n=args.n,
            degree=args.degree if args.degree is not None else 2,
            homogeneous=args.homogeneous,
            paper_scale=args.paper_scale,
            out=args.out,
            mesh=args.mesh,
            threads=args.threads,
        )
    elif cmd == "cavity":
        summary, _, _, _ = drivers.run_cavity(
            n=args.n,
            order=args.order,
            degree=args.degree,
            reynolds=args.reynolds,
            tol=args.tol if args.tol is not None else 1e-8,
            max_iters=args.max_iters,
            out=args.out,
            mesh=args.mesh,
            trace_newton=args.trace,
            check_jacobian=args.check_jacobian,
            threads=args.threads,
        )
    elif cmd == "convergence":
        ns = tuple(int(s) for s in args.ns.split(",") if s)
        summary, table, _ = drivers.run_convergence(
            ns=ns,
            order=args.order,
            degree=args.degree,
            out=args.out,
            solver=args.solver,
            threads=args.threads,
        )
        header = f"{'h':>12} {'el2':>14} {'eh1':>14}"
        rows = [f"{h:12.6f} {e2:14.6e} {e1:14.6e}" for h, e2, e1 in table]
        sys.stdout.write("\n".join([header] + rows) + "\n")
    else:  # pragma: no cover - argparse enforces choices
        raise ValueError(cmd)
    _emit(summary, args.out)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        _dispatch(args)
    except (DriverError, SolverError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
