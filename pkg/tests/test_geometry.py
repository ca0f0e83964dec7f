"""Tests for curve generation, triangulation, BC sampling, and jitter."""

import numpy as np
import pytest

import solidgnn.geometry as geom
from solidgnn.geometry import (
    BC_DIRICHLET_HOM,
    BC_DIRICHLET_NONHOM,
    BC_INTERIOR,
    BC_NEUMANN,
    BoundaryAssignmentError,
    ClosedCurve,
    GeometryGenerationError,
    MeshingError,
    assign_bcs,
    gen_geometry,
    jitter_nodes,
    polygon_area,
    points_in_polygon,
    triangulate,
    validate_boundary_spec,
    validate_mesh,
)


def square_curve(side=1.0):
    pts = np.array([[0.0, 0.0], [side, 0.0], [side, side], [0.0, side]])
    return ClosedCurve.from_polyline(pts)


class TestPolygonUtils:
    def test_shoelace_square(self):
        assert polygon_area([[0, 0], [2, 0], [2, 2], [0, 2]]) == pytest.approx(4.0)

    def test_point_in_polygon(self):
        poly = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        inside = points_in_polygon([[0.5, 0.5], [1.5, 0.5], [-0.1, 0.2]], poly)
        assert inside.tolist() == [True, False, False]

    def test_point_in_concave_polygon(self):
        poly = np.array([[0, 0], [4, 0], [4, 4], [2, 1], [0, 4]], dtype=float)
        inside = points_in_polygon([[2.0, 0.5], [2.0, 3.0]], poly)
        assert inside.tolist() == [True, False]


class TestGenGeometry:
    def test_deterministic(self):
        a = gen_geometry(7, n_ctrl=6, radius_range=(0.5, 1.5))
        b = gen_geometry(7, n_ctrl=6, radius_range=(0.5, 1.5))
        assert np.array_equal(a.control_points, b.control_points)
        assert np.array_equal(a.arc_samples, b.arc_samples)

    def test_different_seeds_differ(self):
        a = gen_geometry(1)
        b = gen_geometry(2)
        assert not np.array_equal(a.control_points, b.control_points)

    def test_equal_radii_control_points_on_unit_circle(self):
        # degenerate radius interval: every control point sits at radius
        # exactly 1 from the generation center
        curve = gen_geometry(7, n_ctrl=4, radius_range=(1.0, 1.0))
        radii = np.linalg.norm(curve.control_points, axis=1)
        np.testing.assert_allclose(radii, 1.0, atol=1e-9)

    def test_area_against_refined_polyline(self):
        # independent oracle: resample the stored cubic segments 10x finer
        # and compare shoelace areas
        curve = gen_geometry(11, n_ctrl=8, radius_range=(0.5, 1.5))
        coarse = curve.area
        t = np.linspace(0.0, 1.0, 201)[:-1]
        w = np.stack(
            [(1 - t) ** 3, 3 * (1 - t) ** 2 * t, 3 * (1 - t) * t**2, t**3]
        )
        fine = np.concatenate(
            [np.einsum("kt,kd->td", w, seg) for seg in curve.segments]
        )
        fine_area = polygon_area(fine)
        assert abs(coarse - fine_area) / abs(fine_area) < 0.01

    def test_curves_are_simple_and_ccw(self):
        for seed in range(25):
            curve = gen_geometry(seed)  # constructor validates both
            assert curve.area > 0

    def test_budget_exhausted(self, monkeypatch):
        monkeypatch.setattr(geom, "GENERATION_BUDGET", 0)
        with pytest.raises(GeometryGenerationError):
            gen_geometry(0)

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            gen_geometry(0, n_ctrl=3)
        with pytest.raises(ValueError):
            gen_geometry(0, radius_range=(0.0, 1.0))


class TestTriangulate:
    def test_unit_square_basic(self):
        mesh = triangulate(square_curve(), 0.5)
        validate_mesh(mesh)
        poly = mesh.nodes[mesh.boundary_nodes]
        centroids = mesh.nodes[mesh.triangles].mean(axis=1)
        assert points_in_polygon(centroids, poly).all()
        # closed cycle: as many boundary edges as boundary nodes
        counts = geom._edge_counts(mesh.triangles)
        n_boundary_edges = sum(1 for c in counts.values() if c == 1)
        assert n_boundary_edges == len(mesh.boundary_nodes)

    def test_refinement_increases_node_count(self):
        coarse = triangulate(square_curve(), 0.5)
        fine = triangulate(square_curve(), 0.25)
        assert fine.n_nodes > coarse.n_nodes

    def test_area_consistency_random_curve(self):
        curve = gen_geometry(5, n_ctrl=8, radius_range=(0.75, 1.25))
        h = curve.diameter / 8.5
        mesh = triangulate(curve, h)
        assert abs(mesh.triangle_areas().sum() - curve.area) / curve.area < 0.02

    def test_triangles_positive_and_valid(self):
        for seed in (0, 3, 9):
            curve = gen_geometry(seed)
            mesh = triangulate(curve, 0.3)
            assert (mesh.triangle_areas() > 0).all()
            validate_mesh(mesh)

    def test_h_too_large_rejected(self):
        with pytest.raises(ValueError):
            triangulate(square_curve(), 5.0)

    def test_too_few_boundary_samples(self):
        thin = ClosedCurve.from_polyline(
            np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.05], [0.0, 0.05]])
        )
        with pytest.raises(MeshingError):
            triangulate(thin, 0.9)

    def test_deterministic(self):
        curve = gen_geometry(4)
        a = triangulate(curve, 0.3)
        b = triangulate(curve, 0.3)
        assert np.array_equal(a.nodes, b.nodes)
        assert np.array_equal(a.triangles, b.triangles)


class TestAssignBcs:
    def setup_method(self):
        self.mesh = triangulate(gen_geometry(3), 0.3)

    def test_invariants_hold_over_seeds(self):
        for seed in range(40):
            spec = assign_bcs(self.mesh, seed)
            validate_boundary_spec(self.mesh, spec)
            # interior nodes have no condition and zero vector
            for i in self.mesh.interior_nodes:
                assert spec.kinds[i] == BC_INTERIOR
                assert spec.magnitudes[i] == 0.0

    def test_homogeneous_draw_is_zero_vector(self):
        found = False
        for seed in range(40):
            spec = assign_bcs(self.mesh, seed)
            hom = spec.mask(BC_DIRICHLET_HOM)
            if hom.any():
                found = True
                assert np.all(spec.vectors[hom] == 0.0)
                assert np.all(spec.magnitudes[hom] == 0.0)
        assert found

    def test_nonhomogeneous_magnitude_range(self):
        for seed in range(60):
            spec = assign_bcs(self.mesh, seed)
            nonhom = spec.mask(BC_DIRICHLET_NONHOM)
            if nonhom.any():
                mags = spec.magnitudes[nonhom]
                assert ((mags >= 0.01) & (mags <= 0.05)).all()
            neu = spec.mask(BC_NEUMANN)
            mags = spec.magnitudes[neu]
            assert ((mags >= 0.5) & (mags <= 2.0)).all()

    def test_dirichlet_fraction_monte_carlo(self):
        # U(0.10, 0.30) arc fractions have mean 0.20
        m = len(self.mesh.boundary_nodes)
        fractions = []
        for seed in range(1000):
            spec = assign_bcs(self.mesh, seed)
            fractions.append(spec.dirichlet_mask.sum() / m)
        assert 0.17 <= np.mean(fractions) <= 0.23

    def test_deterministic(self):
        a = assign_bcs(self.mesh, 5)
        b = assign_bcs(self.mesh, 5)
        assert a.kinds == b.kinds
        assert np.array_equal(a.vectors, b.vectors)

    def test_arcs_disjoint_and_contiguous(self):
        for seed in range(30):
            spec = assign_bcs(self.mesh, seed)
            cyc = self.mesh.boundary_nodes
            dmask = spec.dirichlet_mask[cyc]
            nmask = spec.mask(BC_NEUMANN)[cyc]
            assert not (dmask & nmask).any()
            assert len(geom._contiguous_runs(dmask)) == 1
            assert len(geom._contiguous_runs(nmask)) == 1

    def test_boundary_too_short(self):
        # 3 boundary samples cannot host two disjoint arcs of >= 2 nodes
        tiny = triangulate(square_curve(0.5), 0.6)
        assert len(tiny.boundary_nodes) == 3
        with pytest.raises(BoundaryAssignmentError):
            assign_bcs(tiny, 0)


class TestJitterNodes:
    def setup_method(self):
        self.mesh = triangulate(square_curve(), 0.12)

    def test_zero_sigma_identity(self):
        out = jitter_nodes(self.mesh, 0.0, 3)
        assert np.array_equal(out.nodes, self.mesh.nodes)
        assert np.array_equal(out.triangles, self.mesh.triangles)

    def test_boundary_nodes_unchanged(self):
        out = jitter_nodes(self.mesh, 0.01, 3)
        np.testing.assert_array_equal(
            out.nodes[out.boundary_nodes], self.mesh.nodes[self.mesh.boundary_nodes]
        )

    def test_noise_moment(self):
        # collect >= 1e4 perturbed coordinates across seeds
        deltas = []
        interior = self.mesh.interior_nodes
        for seed in range(int(np.ceil(1e4 / (2 * len(interior))))):
            out = jitter_nodes(self.mesh, 0.01, seed)
            deltas.append((out.nodes[interior] - self.mesh.nodes[interior]).ravel())
        deltas = np.concatenate(deltas)
        assert len(deltas) >= 10_000
        assert 0.009 <= deltas.std() <= 0.011

    def test_triangles_stay_positive(self):
        for seed in range(10):
            out = jitter_nodes(self.mesh, 0.05, seed)
            assert (out.triangle_areas() > 0).all()
            validate_mesh(out)

    def test_deterministic(self):
        a = jitter_nodes(self.mesh, 0.01, 9)
        b = jitter_nodes(self.mesh, 0.01, 9)
        assert np.array_equal(a.nodes, b.nodes)
