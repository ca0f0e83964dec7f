"""Tests for the principal-axis simulation-coordinate frames."""

import numpy as np
import pytest

from solidgnn.coords import (
    DegenerateGeometryError,
    FrameTransform,
    map_output_back,
    map_points_back,
    map_vector,
    rotate_stress_to_frame,
    to_simulation_coords,
)


def rotation(theta):
    return np.array(
        [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
    )


class TestToSimulationCoords:
    def test_axis_aligned_positive_skew_is_fixed_point(self):
        # centered, diagonal covariance, var_x > var_y, positive skew on
        # both axes: the transform must be the identity
        pts = np.array([[-2.0, -1.0], [-1.0, 2.0], [0.0, -1.0], [3.0, 0.0]])
        out, tr = to_simulation_coords(pts)
        np.testing.assert_allclose(tr.translation, 0.0, atol=1e-9)
        np.testing.assert_allclose(tr.rotation, np.eye(2), atol=1e-9)
        np.testing.assert_allclose(out, pts, atol=1e-9)

    def test_rigid_motion_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            pts = rng.normal(size=(rng.integers(5, 40), 2)) * rng.uniform(0.5, 3.0, 2)
            base, _ = to_simulation_coords(pts)
            q = rotation(rng.uniform(0.0, 2.0 * np.pi))
            shift = rng.uniform(-10.0, 10.0, 2)
            moved, _ = to_simulation_coords(pts @ q.T + shift)
            np.testing.assert_allclose(moved, base, atol=1e-8)

    def test_hand_computed_principal_axis(self):
        # cov = diag(3.04, 0.4) by hand; third central moment of the x
        # projection is (1.4^3 - 2.6^3 - 2*0.6^3 + 2.4^3)/5 = -0.288 < 0,
        # so the sign rule flips the dominant axis to -x
        pts = np.array([[2.0, 0.0], [-2.0, 0.0], [0.0, 1.0], [0.0, -1.0], [3.0, 0.0]])
        centered = pts - pts.mean(axis=0)
        cov = centered.T @ centered / len(pts)
        np.testing.assert_allclose(np.diag(cov), [3.04, 0.4], atol=1e-12)
        assert abs(cov[0, 1]) < 1e-12
        skew_x = np.mean(centered[:, 0] ** 3)
        assert skew_x == pytest.approx(-0.288, abs=1e-12)
        _, tr = to_simulation_coords(pts)
        np.testing.assert_allclose(tr.rotation[:, 0], [-1.0, 0.0], atol=1e-9)
        assert np.linalg.det(tr.rotation) == pytest.approx(1.0, abs=1e-12)

    def test_round_trip(self):
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(25, 2)) @ np.diag([2.0, 0.7]) + [4.0, -1.0]
        out, tr = to_simulation_coords(pts)
        np.testing.assert_allclose(map_points_back(tr, out), pts, atol=1e-10)

    def test_collinear_points_rejected(self):
        pts = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        with pytest.raises(DegenerateGeometryError):
            to_simulation_coords(pts)

    def test_orthogonal_proper_rotation(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            pts = rng.normal(size=(12, 2)) * [1.5, 0.5]
            _, tr = to_simulation_coords(pts)
            np.testing.assert_allclose(tr.rotation.T @ tr.rotation, np.eye(2), atol=1e-12)
            assert np.linalg.det(tr.rotation) == pytest.approx(1.0, abs=1e-12)


class TestMapVector:
    def test_identity(self):
        tr = FrameTransform.identity()
        np.testing.assert_allclose(map_vector(tr, [1.5, -2.0]), [1.5, -2.0])

    def test_norm_preserved(self):
        rng = np.random.default_rng(3)
        pts = rng.normal(size=(10, 2)) * [2.0, 0.5]
        _, tr = to_simulation_coords(pts)
        for _ in range(20):
            v = rng.normal(size=2)
            assert np.linalg.norm(map_vector(tr, v)) == pytest.approx(
                np.linalg.norm(v), abs=1e-12
            )

    def test_quarter_turn(self):
        # R^T v with R a 90-degree rotation: (1,0) -> (0,-1)
        tr = FrameTransform(np.zeros(2), rotation(np.pi / 2))
        np.testing.assert_allclose(map_vector(tr, [1.0, 0.0]), [0.0, -1.0], atol=1e-12)


class TestMapOutputBack:
    def test_identity(self):
        tr = FrameTransform.identity()
        disp = np.array([[1.0, 2.0], [3.0, 4.0]])
        stress = np.array([[1.0, 2.0, 0.5], [0.0, 1.0, -1.0]])
        d, s = map_output_back(tr, disp, stress)
        np.testing.assert_allclose(d, disp)
        np.testing.assert_allclose(s, stress)

    def test_hydrostatic_stress_invariant(self):
        rng = np.random.default_rng(4)
        stress = np.array([[2.5, 2.5, 0.0]])
        for _ in range(10):
            tr = FrameTransform(np.zeros(2), rotation(rng.uniform(0, 2 * np.pi)))
            _, s = map_output_back(tr, np.zeros((1, 2)), stress)
            np.testing.assert_allclose(s, stress, atol=1e-12)

    def test_uniaxial_quarter_turn(self):
        # R sigma R^T with R a 90-degree rotation sends sxx=1 to syy=1
        tr = FrameTransform(np.zeros(2), rotation(np.pi / 2))
        _, s = map_output_back(tr, np.zeros((1, 2)), np.array([[1.0, 0.0, 0.0]]))
        np.testing.assert_allclose(s, [[0.0, 1.0, 0.0]], atol=1e-12)

    def test_inverse_of_forward_rotation(self):
        rng = np.random.default_rng(5)
        pts = rng.normal(size=(9, 2)) * [3.0, 1.0]
        _, tr = to_simulation_coords(pts)
        stress = rng.normal(size=(9, 3))
        disp = rng.normal(size=(9, 2))
        stress_sc = rotate_stress_to_frame(tr, stress)
        disp_sc = map_vector(tr, disp)
        d, s = map_output_back(tr, disp_sc, stress_sc)
        np.testing.assert_allclose(d, disp, atol=1e-12)
        np.testing.assert_allclose(s, stress, atol=1e-12)
