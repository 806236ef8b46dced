import subprocess
import sys

import numpy as np
import pytest

import cartfem as cf
from cartfem import drivers
from cartfem.cli import main
from cartfem.drivers import DriverError

RNG = np.random.default_rng(1234)


class TestPoissonDriver:
    def test_constant_solution(self):
        # full Dirichlet g=2 with f=0 and no flux: uh is identically 2
        summary, uh = drivers.run_poisson(n=4, f=0.0, g=2.0, flux=0.0)
        np.testing.assert_allclose(uh.raw_values, 2.0, atol=1e-12)

    def test_defaults_obey_maximum_principle(self):
        summary, uh = drivers.run_poisson()
        assert summary["uh_max"] > 2.0
        assert summary["uh_min"] >= 2.0 - 1e-12

    def test_outputs_written(self, tmp_path):
        out = tmp_path / "poi"
        drivers.run_poisson(n=4, out=str(out))
        assert (tmp_path / "poi.vtk").exists()

    def test_3d_variant(self):
        summary, uh = drivers.run_poisson(n=4, dim=3)
        assert summary["dim"] == 3
        assert summary["uh_max"] > 2.0

    def test_mesh_file_input(self, tmp_path):
        model = cf.cartesian_model((0, 1, 0, 1), (4, 4))
        path = tmp_path / "m.mesh"
        cf.write_model(model, path)
        summary, uh = drivers.run_poisson(mesh=str(path))
        assert summary["free_dofs"] == 15  # 25 vertices - 10 on closed x-sides


class TestElasticityDriver:
    def test_affine_patch_test(self):
        # prescribing an affine displacement on the whole boundary must be
        # reproduced exactly in the interior (order-1 space contains it)
        model = cf.cartesian_model((0, 1, 0, 1, 0, 1), (3, 3, 3))
        A = np.array([[0.3, 0.1, 0.0], [-0.2, 0.5, 0.4], [0.1, 0.0, -0.3]])
        c = np.array([0.1, -0.2, 0.05])
        affine = lambda x: x @ A.T + c
        V = cf.test_space(model, "Q", 1, ncomp=3, dirichlet_tags=["boundary"])
        U = cf.trial_space(V, affine)
        trian = cf.triangulation(model)
        quad = cf.cell_quadrature(trian, 2)
        lam, mu = 51.0, 26.0
        eye = cf.Constant(np.eye(3))
        sigma = lambda e: lam * cf.trace(e) * eye + 2 * mu * e
        a = lambda u, v: cf.inner(
            cf.symmetric_gradient(v), sigma(cf.symmetric_gradient(u))
        )
        uh = cf.assemble_affine(U, V, cf.LinearTerm(a, trian, quad)).solve()
        exact = cf.interpolate(V, affine)
        assert np.max(np.abs(uh.raw_values - exact.raw_values)) < 1e-10

    def test_full_run_symmetric_stress(self):
        summary, uh = drivers.run_elasticity(n=4)
        assert summary["sigma_asymmetry_rel"] < 1e-12
        assert summary["lambda"] == pytest.approx(
            70e9 * 0.33 / ((1 + 0.33) * (1 - 2 * 0.33))
        )
        assert summary["mu"] == pytest.approx(70e9 / (2 * 1.33))
        assert summary["ux_max"] == pytest.approx(0.005, abs=1e-12)


class TestPLaplacianDriver:
    def test_p2_two_iterations(self):
        summary, uh, log = drivers.run_plaplacian(n=8, p=2.0)
        assert summary["newton_iterations"] <= 2

    def test_p3_converges(self):
        summary, uh, log = drivers.run_plaplacian(n=8, p=3.0)
        assert summary["residual_inf"] < 1e-8

    def test_jacobian_check_flag(self):
        summary, uh, log = drivers.run_plaplacian(n=4, check_jacobian=True)
        assert summary["fd_jacobian_rel_err"] < 1e-5

    def test_deterministic_summary(self):
        s1, _, _ = drivers.run_plaplacian(n=6, p=3.0)
        s2, _, _ = drivers.run_plaplacian(n=6, p=3.0)
        assert s1 == s2


class TestDGDriver:
    def test_2d_variant(self):
        summary, uh = drivers.run_dg(n=4, dim=2, order=2)
        assert summary["el2"] < 1e-10 and summary["eh1"] < 1e-10

    def test_gamma_and_h(self):
        summary, uh = drivers.run_dg(n=4, dim=2, order=3)
        assert summary["gamma"] == 12
        assert summary["h"] == 0.25

    def test_failure_raises(self):
        with pytest.raises(DriverError):
            drivers.run_dg(n=2, dim=2, order=1, tol=1e-30)

    def test_jump_output(self, tmp_path):
        out = tmp_path / "dg"
        drivers.run_dg(n=2, dim=2, order=1, out=str(out))
        data = cf.read_vtk(tmp_path / "dg_jumps.vtk")
        assert np.max(np.abs(data["point_data"]["jump_uh"])) < 1e-10


class TestDarcyDriver:
    def test_homogeneous_oracle(self):
        summary, uh, ph = drivers.run_darcy(n=16, homogeneous=True)
        assert summary["flux_l2_error"] < 1e-10
        assert summary["pressure_l2_error"] < 1e-10
        # the distance to the linear pressure itself decays like h
        assert summary["pressure_l2_distance_to_x1"] == pytest.approx(
            (1.0 / 16) / np.sqrt(12), rel=1e-6
        )

    def test_flux_bc_exact(self):
        summary, uh, ph = drivers.run_darcy(n=8)
        assert summary["flux_bc_max"] == 0.0

    def test_heterogeneous_deflects_flux(self):
        # with the low-permeability block the vertical flux component wakes up
        _, u_hom, _ = drivers.run_darcy(n=16, homogeneous=True)
        _, u_het, _ = drivers.run_darcy(n=16)
        pts = np.array([[0.35, 0.5], [0.5, 0.35], [0.35, 0.6]])
        np.testing.assert_allclose(u_hom.eval_at(pts)[:, 1], 0.0, atol=1e-12)
        assert np.max(np.abs(u_het.eval_at(pts)[:, 1])) > 1e-2


class TestCavityDriver:
    def test_stokes_limit_two_iterations(self):
        summary, uh, ph, log = drivers.run_cavity(n=8, reynolds=0.0)
        assert summary["newton_iterations"] <= 2

    def test_re10_small_mesh(self):
        summary, uh, ph, log = drivers.run_cavity(n=8)
        assert summary["residual_inf"] < 1e-8
        assert abs(summary["pressure_mean"]) < 1e-12
        assert summary["lid_dofs_exact"] is True
        assert summary["div_u_l2"] > 0.0  # not pointwise divergence free


class TestConvergenceDriver:
    def test_linear_manufactured_is_exact(self):
        # u = x + y is in every H1 space: errors at round-off on any mesh
        model = cf.cartesian_model((0, 1, 0, 1), (5, 5))
        V = cf.test_space(model, "Q", 1, dirichlet_tags=["boundary"])
        U = cf.trial_space(V, lambda x: x[..., 0] + x[..., 1])
        trian = cf.triangulation(model)
        quad = cf.cell_quadrature(trian, 2)
        a = lambda u, v: cf.inner(cf.gradient(v), cf.gradient(u))
        b = lambda v: v * 0.0
        uh = cf.assemble_affine(U, V, cf.AffineTerm(a, b, trian, quad)).solve()
        uex = cf.analytic(
            lambda x: x[..., 0] + x[..., 1],
            grad=lambda x: np.ones_like(x),
        )
        el2, eh1 = cf.error_norms(uex - uh, trian, quad)
        assert el2 < 1e-10 and eh1 < 1e-10

    def test_needs_three_meshes(self):
        with pytest.raises(DriverError):
            drivers.run_convergence(ns=(4, 8))

    def test_order1_rates(self):
        summary, table, (s2, s1) = drivers.run_convergence(ns=(8, 16, 32), order=1)
        assert 1.8 <= s2 <= 2.2
        assert 0.8 <= s1 <= 1.2


class TestCLI:
    def test_documented_defaults(self):
        from cartfem.cli import build_parser

        parser = build_parser()
        dg = parser.parse_args(["dg"])
        assert (dg.n, dg.order, dg.dim) == (4, 3, 3)
        darcy = parser.parse_args(["darcy"])
        assert darcy.n == 32 and not darcy.paper_scale
        cavity = parser.parse_args(["cavity"])
        assert (cavity.n, cavity.order, cavity.reynolds) == (32, 2, 10.0)
        conv = parser.parse_args(["convergence"])
        assert conv.ns == "8,16,32,64" and conv.order == 2

    def test_exit_zero_and_summary_file(self, tmp_path):
        out = tmp_path / "run"
        code = main(["poisson", "--n", "4", "--out", str(out)])
        assert code == 0
        text = (tmp_path / "run.summary").read_text()
        assert "driver=poisson" in text
        assert all("=" in line for line in text.strip().splitlines())

    def test_exit_nonzero_on_failure(self, capsys):
        code = main(["dg", "--n", "2", "--dim", "2", "--order", "1", "--tol", "1e-30"])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_reruns_are_bitwise_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["plaplacian", "--n", "4", "--out", str(a)])
        main(["plaplacian", "--n", "4", "--out", str(b)])
        assert (tmp_path / "a.summary").read_bytes() == (tmp_path / "b.summary").read_bytes()

    def test_console_script_entry(self):
        out = subprocess.run(
            [sys.executable, "-m", "cartfem.cli", "darcy", "--n", "4", "--homogeneous"],
            capture_output=True,
            text=True,
        )
        assert out.returncode == 0
        assert "flux_l2_error" in out.stdout

    def test_mesh_flag(self, tmp_path):
        model = cf.cartesian_model((0, 1, 0, 1), (3, 3))
        path = tmp_path / "m.mesh"
        cf.write_model(model, path)
        code = main(["poisson", "--mesh", str(path)])
        assert code == 0

    def test_threads_flag_matches_serial(self, capsys):
        main(["poisson", "--n", "6"])
        serial = capsys.readouterr().out
        main(["poisson", "--n", "6", "--threads", "2"])
        threaded = capsys.readouterr().out
        assert serial == threaded
