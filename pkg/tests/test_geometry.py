import numpy as np
import pytest

from mgtlab import geometry as geo
from mgtlab.errors import (GeometricConditionError, PartitionError,
                           ValidationError)


class TestBuildMesh:
    def test_interval_counts_and_normals(self):
        mesh = geo.build_interval(0.0, 1.0, 4)
        assert mesh.n_vertices == 5
        assert mesh.n_facets == 2
        assert np.array_equal(mesh.facet_normals, [[-1.0], [1.0]])
        assert np.array_equal(mesh.facet_cells, [0, 3])

    def test_rectangle_boundary(self):
        mesh = geo.build_rectangle(0, 1, 0, 1, 2, 2)
        assert mesh.n_facets == 8
        norms = np.linalg.norm(mesh.facet_normals, axis=1)
        assert np.abs(norms - 1.0).max() <= 1e-12
        # axis-aligned
        assert np.all(np.min(np.abs(mesh.facet_normals), axis=1) == 0.0)

    def test_resolution_one_rejected(self):
        with pytest.raises(ValidationError):
            geo.build_interval(0.0, 1.0, 1)
        with pytest.raises(ValidationError):
            geo.build_rectangle(0, 1, 0, 1, 1, 4)

    def test_degenerate_bounds_rejected(self):
        with pytest.raises(ValidationError):
            geo.build_interval(1.0, 1.0, 4)
        with pytest.raises(ValidationError):
            geo.build_rectangle(0, 1, 2, 2, 3, 3)

    def test_cell_measures_positive_and_tile(self):
        mesh = geo.build_rectangle(0, 2, 0, 1, 3, 4)
        meas = mesh.cell_measures()
        assert np.all(meas > 0)
        assert meas.sum() == pytest.approx(2.0, rel=1e-13)

    def test_facet_measures_tile_boundary(self):
        mesh = geo.build_rectangle(0, 2, 0, 1, 5, 3)
        assert mesh.facet_measures.sum() == pytest.approx(6.0, rel=1e-13)
        mesh1 = geo.build_interval(0.0, 1.0, 7)
        assert mesh1.facet_measures.sum() == 2.0  # one unit per endpoint

    def test_dispatch(self):
        m = geo.build_mesh("interval", (0, 2), 5)
        assert m.dim == 1
        m = geo.build_mesh("rectangle", (0, 1, 0, 1), (3, 4))
        assert m.dim == 2 and m.n_cells == 24
        with pytest.raises(ValidationError):
            geo.build_mesh("disk", (0, 1), 4)


class TestPartition:
    def test_interval_example(self):
        mesh = geo.build_interval(0.0, 1.0, 4)
        part = geo.partition_boundary(mesh, -1.0)
        # facet at 0: h.nu = (0-(-1))*(-1) = -1 <= 0 -> gamma1; at 1: 2 > 0 -> gamma0
        assert list(part.gamma1) == [0]
        assert list(part.gamma0) == [1]

    def test_rectangle_example(self):
        mesh = geo.build_rectangle(0, 1, 0, 1, 3, 3)
        part = geo.partition_boundary(mesh, (-1.0, -1.0))
        n0 = mesh.facet_normals[part.gamma0]
        n1 = mesh.facet_normals[part.gamma1]
        # right (+x) and top (+y) edges feed back; left and bottom are clamped
        assert np.all(n0 @ np.array([1.0, 1.0]) > 0)
        assert np.all(n1 @ np.array([1.0, 1.0]) < 0)
        assert part.gamma0.size == part.gamma1.size == mesh.n_facets // 2

    def test_interior_x0_rejected(self):
        mesh = geo.build_rectangle(0, 1, 0, 1, 3, 3)
        with pytest.raises(GeometricConditionError):
            geo.partition_boundary(mesh, (0.5, 0.5))

    def test_boundary_x0_rejected(self):
        mesh = geo.build_interval(0.0, 1.0, 4)
        with pytest.raises(GeometricConditionError):
            geo.partition_boundary(mesh, 1.0)

    def test_refinement_invariance(self):
        x0 = np.array([-0.3, -2.0])

        def edge_classes(n):
            mesh = geo.build_rectangle(0, 1, 0, 1, n, n)
            part = geo.partition_boundary(mesh, x0)
            labels = {}
            for f in range(mesh.n_facets):
                nrm = tuple(mesh.facet_normals[f])
                side = "g0" if f in set(part.gamma0) else "g1"
                labels.setdefault(nrm, set()).add(side)
            return labels

        coarse = edge_classes(2)
        fine = edge_classes(16)
        assert coarse == fine
        # and classification is constant along each edge
        assert all(len(v) == 1 for v in fine.values())

    def test_sign_consistency_probe(self):
        mesh = geo.build_rectangle(0, 1, 0, 1, 4, 4)
        part = geo.partition_boundary(mesh, (-2.0, -0.5))
        ok, detail = geo.partition_sign_report(mesh, part, n_points=3)
        assert ok, detail

    def test_overlap_rejected(self):
        with pytest.raises(PartitionError):
            geo.BoundaryPartition(np.array([0, 1]), np.array([1, 2]), None)

    def test_dirichlet_partition(self):
        mesh = geo.build_interval(0.0, 1.0, 4)
        part = geo.dirichlet_partition(mesh)
        assert part.gamma0.size == 0 and part.gamma1.size == 2

    def test_partition_from_facets(self):
        mesh = geo.build_rectangle(0, 1, 0, 1, 2, 2)
        part = geo.partition_from_facets(mesh, [0, 1])
        assert set(part.gamma0) == {0, 1}
        assert part.gamma0.size + part.gamma1.size == mesh.n_facets


class TestMultiplierField:
    def test_eval_h(self):
        assert np.array_equal(geo.eval_h((1.0, 1.0), (-1.0, -1.0)), [2.0, 2.0])
        assert np.array_equal(geo.eval_h((0.3,), (0.3,)), [0.0])

    def test_div_h_equals_dimension(self):
        assert geo.div_h(1) == 1.0
        assert geo.div_h(2) == 2.0

    def test_max_h_norm_is_corner_distance(self):
        mesh = geo.build_rectangle(0, 1, 0, 1, 5, 5)
        assert geo.max_h_norm(mesh, (-1.0, -1.0)) == pytest.approx(2 * np.sqrt(2), rel=1e-14)
        mesh1 = geo.build_interval(0.0, 1.0, 9)
        assert geo.max_h_norm(mesh1, -1.0) == pytest.approx(2.0, rel=1e-14)


class TestQuadrature:
    def test_facet_rule_exact_for_cubics(self):
        mesh = geo.build_rectangle(0, 1, 0, 1, 2, 2)
        pts, w = mesh.facet_quadrature()
        # integrate x^3 + y over the bottom-left bottom edge [0, 0.5] x {0}
        f = pts[..., 0] ** 3 + pts[..., 1]
        idx = [i for i in range(mesh.n_facets)
               if np.allclose(mesh.facet_midpoints()[i], [0.25, 0.0])][0]
        val = np.sum(f[idx] * w[idx])
        assert val == pytest.approx(0.5**4 / 4, rel=1e-13)

    def test_cell_rule_exact_for_quadratics(self):
        mesh = geo.build_rectangle(0, 1, 0, 1, 3, 3)
        shape, pts, w = geo.cell_quadrature(mesh)
        val = np.sum((pts[..., 0] * pts[..., 1]) * w)
        assert val == pytest.approx(0.25, rel=1e-13)
        mesh1 = geo.build_interval(0.0, 2.0, 5)
        _, pts1, w1 = geo.cell_quadrature(mesh1)
        assert np.sum(pts1[..., 0] ** 2 * w1) == pytest.approx(8.0 / 3.0, rel=1e-13)

    def test_cell_gradients_reproduce_linear(self):
        mesh = geo.build_rectangle(0, 1, 0, 1, 3, 2)
        grads = geo.cell_gradients(mesh)
        u = 2.0 * mesh.vertices[:, 0] - 3.0 * mesh.vertices[:, 1] + 1.0
        g = np.einsum("cdn,cn->cd", grads, u[mesh.cells])
        assert np.abs(g - np.array([2.0, -3.0])).max() <= 1e-12


def test_dump_mesh(tmp_path):
    mesh = geo.build_rectangle(0, 1, 0, 1, 2, 2)
    path = tmp_path / "mesh.txt"
    geo.dump_mesh(mesh, path)
    text = path.read_text()
    assert f"vertices {mesh.n_vertices}" in text
    assert f"cells {mesh.n_cells}" in text
