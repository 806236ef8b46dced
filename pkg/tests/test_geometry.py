import numpy as np
import pytest

from cartfem import (
    add_tag_from_tags,
    boundary_triangulation,
    cartesian_model,
    cell_quadrature,
    get_normal_vector,
    skeleton_triangulation,
    triangulation,
)


class TestInterior:
    def test_detj_positive_and_uniform(self):
        trian = triangulation(cartesian_model((0, 2, 0, 1), (4, 2)))
        assert trian.detj == pytest.approx(0.5 * 0.5)
        assert trian.num_entries == 8


class TestBoundary:
    def test_default_covers_whole_boundary(self):
        model = cartesian_model((0, 1, 0, 1), (4, 4))
        btrian = boundary_triangulation(model)
        assert btrian.num_entries == 16

    def test_tagged_subset(self):
        model = cartesian_model((0, 1, 0, 1), (4, 4))
        btrian = boundary_triangulation(model, [6])
        assert btrian.num_entries == 4
        np.testing.assert_allclose(btrian.normals, [[0.0, 1.0]] * 4)

    def test_unknown_tag(self):
        model = cartesian_model((0, 1, 0, 1), (4, 4))
        with pytest.raises(KeyError):
            boundary_triangulation(model, ["circle"])

    def test_empty_tag_is_an_error(self):
        model = cartesian_model((0, 1, 0, 1), (4, 4))
        labels = add_tag_from_tags(model.labels, "corner", [1])  # a vertex, no facets
        model = model.with_labels(labels)
        with pytest.raises(ValueError, match="no boundary facets"):
            boundary_triangulation(model, ["corner"])

    def test_interior_facets_rejected(self):
        model = cartesian_model((0, 1, 0, 1), (4, 4))
        with pytest.raises(ValueError, match="boundary facets"):
            boundary_triangulation(model, ["interior"])

    def test_outward_normals(self):
        model = cartesian_model((0, 1, 0, 1), (2, 2))
        for tag, n in [(5, (0, -1)), (6, (0, 1)), (7, (-1, 0)), (8, (1, 0))]:
            btrian = boundary_triangulation(model, [tag])
            np.testing.assert_allclose(btrian.normals, [n] * 2)
            np.testing.assert_allclose(np.linalg.norm(btrian.normals, axis=1), 1.0)

    def test_3d_top_face_normal(self):
        model = cartesian_model((0, 1, 0, 1, 0, 1), (2, 2, 2))
        btrian = boundary_triangulation(model, [22])  # z = 1 face interior
        np.testing.assert_allclose(btrian.normals, [[0, 0, 1]] * 4)

    def test_measures_sum_to_perimeter(self):
        model = cartesian_model((0, 2.0, 0, 0.5), (5, 3))
        btrian = boundary_triangulation(model)
        assert btrian.measure.sum() == pytest.approx(2 * (2.0 + 0.5), rel=1e-12)


class TestSkeleton:
    def test_facet_count_4x4(self):
        model = cartesian_model((0, 1, 0, 1), (4, 4))
        strian = skeleton_triangulation(model)
        assert strian.num_entries == 2 * 4 * 3

    def test_each_interior_facet_once(self):
        model = cartesian_model((0, 1, 0, 1, 0, 1), (3, 2, 2))
        strian = skeleton_triangulation(model)
        assert len(np.unique(strian.facets)) == strian.num_entries
        info = model.facet_info()
        n_interior = np.count_nonzero(
            (info["lower_cell"] >= 0) & (info["upper_cell"] >= 0)
        )
        assert strian.num_entries == n_interior

    def test_plus_cell_has_smaller_id(self):
        model = cartesian_model((0, 1, 0, 1), (3, 3))
        strian = skeleton_triangulation(model)
        assert np.all(strian.plus_cell < strian.minus_cell)

    def test_normal_out_of_plus_cell_2x1(self):
        model = cartesian_model((0, 1, 0, 1), (2, 1))
        strian = skeleton_triangulation(model)
        assert strian.num_entries == 1
        assert strian.plus_cell[0] == 0 and strian.minus_cell[0] == 1
        np.testing.assert_allclose(strian.normals[0], [1.0, 0.0])

    def test_plus_minus_normals_opposite(self):
        # outward normal of the minus cell on the shared facet is -n
        model = cartesian_model((0, 1, 0, 1), (3, 2))
        strian = skeleton_triangulation(model)
        for g in strian.groups:
            # plus side embeds at x_axis = 1 (high side), minus at 0 (low side):
            # outward of plus is +e_axis, outward of minus is -e_axis
            out_plus = np.zeros(model.dim)
            out_plus[g.axis] = 1.0
            np.testing.assert_allclose(g.normal, out_plus)

    def test_diameter_sum_invariant(self):
        n = 5
        model = cartesian_model((0, 1, 0, 1), (n, n))
        strian = skeleton_triangulation(model)
        expected = 2 * n * (n - 1) * (1.0 / n)
        assert strian.diameter.sum() == pytest.approx(expected, rel=1e-12)

    def test_3d_diameter_is_max_edge(self):
        model = cartesian_model((0, 1, 0, 2, 0, 4), (2, 2, 2))
        strian = skeleton_triangulation(model)
        # facet normal to x has tangential spans (1.0, 2.0) -> diameter 2.0
        sel = strian.axis == 0
        np.testing.assert_allclose(strian.diameter[sel], 2.0)


class TestEmbedding:
    def test_skeleton_sides_meet_at_same_physical_point(self):
        model = cartesian_model((0, 1, 0, 1), (3, 3))
        strian = skeleton_triangulation(model)
        pts = np.array([[0.25], [0.75]])
        for g in strian.groups:
            plus_ref = g.embed(pts, minus=False)
            minus_ref = g.embed(pts, minus=True)
            o_plus = model.cell_origin(g.cells)
            o_minus = model.cell_origin(g.minus_cells)
            x_plus = o_plus[:, None, :] + plus_ref[None] * model.h
            x_minus = o_minus[:, None, :] + minus_ref[None] * model.h
            np.testing.assert_allclose(x_plus, x_minus, atol=1e-14)


class TestNormalField:
    def test_rejects_interior(self):
        model = cartesian_model((0, 1, 0, 1), (2, 2))
        with pytest.raises(TypeError):
            get_normal_vector(triangulation(model))

    def test_quadrature_dimension(self):
        model = cartesian_model((0, 1, 0, 1), (2, 2))
        assert cell_quadrature(triangulation(model), 2).points.shape[1] == 2
        assert cell_quadrature(boundary_triangulation(model), 2).points.shape[1] == 1
        assert cell_quadrature(skeleton_triangulation(model), 2).points.shape[1] == 1
