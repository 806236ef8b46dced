import numpy as np
import pytest

from cartfem import (
    MeshFormatError,
    add_tag_from_tags,
    cartesian_model,
    read_model,
    write_model,
)


class TestConstruction:
    def test_unit_square_counts(self):
        model = cartesian_model((0, 1, 0, 1), (4, 4))
        assert model.num_cells == 16
        assert model.num_vertices == 25
        assert model.vertex_coords.shape == (25, 2)

    def test_unit_cube_counts(self):
        model = cartesian_model((0, 1, 0, 1, 0, 1), (4, 4, 4))
        assert model.num_cells == 64
        assert model.num_vertices == 125

    def test_4d_construction(self):
        model = cartesian_model((0, 1) * 4, (2, 2, 2, 2))
        assert model.num_cells == 16
        assert model.num_vertices == 81
        assert model.interior_entity_id == 81

    def test_vertex_ordering_x_fastest(self):
        model = cartesian_model((0, 2, 0, 1), (2, 1))
        x = model.vertex_coords
        np.testing.assert_allclose(x[0], [0.0, 0.0])
        np.testing.assert_allclose(x[1], [1.0, 0.0])
        np.testing.assert_allclose(x[2], [2.0, 0.0])
        np.testing.assert_allclose(x[3], [0.0, 1.0])

    def test_cell_vertices_tensor_order(self):
        model = cartesian_model((0, 1, 0, 1), (2, 2))
        # cell 0 is the lower-left cell; vertices x fastest
        np.testing.assert_array_equal(model.cells[0], [0, 1, 3, 4])
        np.testing.assert_array_equal(model.cells[3], [4, 5, 7, 8])

    @pytest.mark.parametrize(
        "box,partition",
        [
            ((0, 0, 0, 1), (2, 2)),
            ((1, 0, 0, 1), (2, 2)),
            ((0, 1, 0, 1), (0, 2)),
            ((0, 1, 0, 1), (2, -1)),
        ],
    )
    def test_invalid_arguments(self, box, partition):
        with pytest.raises(ValueError):
            cartesian_model(box, partition)

    def test_box_length_mismatch(self):
        with pytest.raises(ValueError):
            cartesian_model((0, 1, 0, 1, 0, 1), (2, 2))


class TestEntities2D:
    def setup_method(self):
        self.model = cartesian_model((0, 1, 0, 1), (2, 2))
        self.labels = self.model.labels

    def test_corner_entities(self):
        ents = self.labels.entities[0]
        assert ents[0] == 1  # (x0, y0)
        assert ents[2] == 2  # (x1, y0)
        assert ents[6] == 3  # (x0, y1)
        assert ents[8] == 4  # (x1, y1)
        assert ents[4] == 9  # center vertex is interior

    def test_edge_vertices_take_edge_entities(self):
        ents = self.labels.entities[0]
        assert ents[1] == 5  # bottom midside
        assert ents[7] == 6  # top midside
        assert ents[3] == 7  # left midside
        assert ents[5] == 8  # right midside

    def test_facets_on_top_carry_entity_6(self):
        info = self.model.facet_info()
        ents = self.labels.entities[1]
        top = (info["axis"] == 1) & (info["apos"] == self.model.partition[1])
        assert np.all(ents[top] == 6)
        assert np.count_nonzero(top) == 2

    def test_cells_are_interior(self):
        assert np.all(self.labels.entities[2] == 9)

    def test_every_face_has_one_entity(self):
        for m in range(3):
            ents = self.labels.entities[m]
            assert ents.shape == (self.model.num_faces(m),)
            assert np.all(ents >= 1)
            assert np.all(ents <= 9)


class TestEntities3D:
    def test_groups(self):
        model = cartesian_model((0, 1, 0, 1, 0, 1), (2, 2, 2))
        ents0 = model.labels.entities[0]
        # corners of the cube, x fastest
        corner_ids = [0, 2, 6, 8, 18, 20, 24, 26]
        np.testing.assert_array_equal(ents0[corner_ids], np.arange(1, 9))
        # counts per group
        all_ents = np.concatenate([model.labels.entities[m] for m in range(4)])
        present = np.unique(all_ents)
        np.testing.assert_array_equal(present, np.arange(1, 28))

    def test_side_closure(self):
        model = cartesian_model((0, 1, 0, 1, 0, 1), (2, 2, 2))
        closure = set(model.side_closure_entities(0, 0))  # x == 0 face, closed
        assert closure == {1, 3, 5, 7, 13, 15, 17, 19, 25}


class TestFacetTopology:
    def test_every_facet_has_one_or_two_cells(self):
        model = cartesian_model((0, 1, 0, 1), (3, 2))
        info = model.facet_info()
        ncells = (info["lower_cell"] >= 0).astype(int) + (info["upper_cell"] >= 0).astype(int)
        assert set(ncells.tolist()) == {1, 2}

    def test_interior_facet_cells_differ_in_one_index(self):
        model = cartesian_model((0, 1, 0, 1, 0, 1), (3, 2, 2))
        info = model.facet_info()
        interior = (info["lower_cell"] >= 0) & (info["upper_cell"] >= 0)
        lo = np.stack(
            np.unravel_index(info["lower_cell"][interior], model.partition, order="F"),
            axis=1,
        )
        hi = np.stack(
            np.unravel_index(info["upper_cell"][interior], model.partition, order="F"),
            axis=1,
        )
        diff = hi - lo
        assert np.all(np.sum(np.abs(diff), axis=1) == 1)
        assert np.all(np.max(diff, axis=1) == 1)

    def test_boundary_measure_sums_to_perimeter(self):
        model = cartesian_model((0, 2.5, 0, 1.5), (7, 5))
        info = model.facet_info()
        boundary = (info["lower_cell"] < 0) | (info["upper_cell"] < 0)
        tang = np.where(info["axis"][boundary] == 0, model.h[1], model.h[0])
        assert abs(tang.sum() - 2 * (2.5 + 1.5)) < 1e-12 * 8.0


class TestTags:
    def test_add_tag_union(self):
        model = cartesian_model((0, 1, 0, 1), (2, 2))
        labels = add_tag_from_tags(model.labels, "diri0", [1, 2, 3, 4, 5, 7, 8])
        labels = add_tag_from_tags(labels, "diri1", [6])
        labels = add_tag_from_tags(labels, "all", ["diri0", "diri1"])
        assert labels.tags["all"] == labels.tags["diri0"] | labels.tags["diri1"]
        assert labels.tags["all"] == frozenset(range(1, 9))

    def test_walls_tag_resolves_four_facets(self):
        model = cartesian_model((0, 1, 0, 1), (2, 2))
        labels = add_tag_from_tags(model.labels, "walls", [5, 6])
        mask = labels.face_mask(1, labels.resolve("walls"))
        assert np.count_nonzero(mask) == 4

    def test_unknown_source(self):
        model = cartesian_model((0, 1, 0, 1), (2, 2))
        with pytest.raises(KeyError):
            add_tag_from_tags(model.labels, "bad", ["nope"])
        with pytest.raises(KeyError):
            add_tag_from_tags(model.labels, "bad", [99])

    def test_duplicate_tag(self):
        model = cartesian_model((0, 1, 0, 1), (2, 2))
        with pytest.raises(ValueError):
            add_tag_from_tags(model.labels, "boundary", [5])

    def test_monotone_resolution(self):
        model = cartesian_model((0, 1, 0, 1), (3, 3))
        before = {name: model.labels.resolve(name) for name in model.labels.tag_names()}
        labels = add_tag_from_tags(model.labels, "extra", [5, 7])
        for name, ids in before.items():
            assert labels.resolve(name) == ids
        # original labeling untouched (copy-on-write)
        assert "extra" not in model.labels.tags


class TestFileFormat:
    def test_round_trip(self, tmp_path):
        model = cartesian_model((0, 1, 0, 1), (4, 4))
        labels = add_tag_from_tags(model.labels, "walls", [5, 6])
        model = model.with_labels(labels)
        path = tmp_path / "m.mesh"
        write_model(model, path)
        back = read_model(path)
        assert back.partition == model.partition
        np.testing.assert_array_equal(back.vertex_coords, model.vertex_coords)
        assert back.labels == model.labels

    def test_round_trip_3d(self, tmp_path):
        model = cartesian_model((0, 2, 0, 1, 0, 1), (2, 3, 2))
        path = tmp_path / "m.mesh"
        write_model(model, path)
        back = read_model(path)
        np.testing.assert_array_equal(back.vertex_coords, model.vertex_coords)
        assert back.labels == model.labels

    def test_duplicate_entity_assignment(self, tmp_path):
        model = cartesian_model((0, 1, 0, 1), (2, 2))
        path = tmp_path / "m.mesh"
        write_model(model, path)
        text = path.read_text()
        text += "entity 1 0 6\n"
        path.write_text(text)
        with pytest.raises(MeshFormatError, match="two entity ids"):
            read_model(path)

    def test_tag_referencing_nonexistent_entity(self, tmp_path):
        model = cartesian_model((0, 1, 0, 1), (2, 2))
        path = tmp_path / "m.mesh"
        write_model(model, path)
        path.write_text(path.read_text() + "tag ghost: 99\n")
        with pytest.raises(MeshFormatError, match="nonexistent entity 99"):
            read_model(path)

    def test_parse_error_carries_line(self, tmp_path):
        path = tmp_path / "m.mesh"
        path.write_text("cartfem-mesh 1\ndim 2\nbox 0 1 0 1\npartition 2 x\n")
        with pytest.raises(MeshFormatError, match="line 4"):
            read_model(path)

    def test_missing_header(self, tmp_path):
        path = tmp_path / "m.mesh"
        path.write_text("hello\n")
        with pytest.raises(MeshFormatError):
            read_model(path)
