"""Rotation/translation-invariant "simulation coordinate" frames.

A frame is fitted to a point cloud by centering at the centroid and
rotating onto the principal axes of the coordinate covariance. Because
eigenvectors are only defined up to sign, a deterministic sign rule is
applied so that two rigidly-moved copies of the same geometry land on
identical simulation coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FrameTransform",
    "DegenerateGeometryError",
    "to_simulation_coords",
    "map_vector",
    "map_points_back",
    "map_output_back",
    "rotate_stress_to_frame",
]

# Skewness magnitudes below this are treated as zero and the max-|proj|
# fallback rule decides the eigenvector sign instead.
SKEW_TOL = 1e-9


class DegenerateGeometryError(ValueError):
    """Raised when a point cloud has no well-defined principal frame."""


@dataclass(frozen=True)
class FrameTransform:
    """Rigid map between physical and simulation coordinates.

    ``translation`` is the centroid of the fitted points; the columns of
    ``rotation`` are the chosen principal axes (det = +1). A physical
    point p maps to simulation coordinates via R^T (p - t).
    """

    translation: np.ndarray  # shape (2,)
    rotation: np.ndarray  # shape (2, 2), orthogonal, det +1

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(2)
        r = np.asarray(self.rotation, dtype=np.float64).reshape(2, 2)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", r)
        if not np.allclose(r.T @ r, np.eye(2), atol=1e-12):
            raise ValueError("rotation must be orthogonal")
        if abs(np.linalg.det(r) - 1.0) > 1e-12:
            raise ValueError("rotation must be proper (det = +1)")

    @classmethod
    def identity(cls) -> "FrameTransform":
        return cls(np.zeros(2), np.eye(2))


def _fix_sign(centered: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """Resolve the sign ambiguity of one eigenvector.

    Flip so the third central moment of the projected coordinates is
    nonnegative; if the skewness is numerically zero, flip so the
    projection with the largest magnitude is positive.
    """
    proj = centered @ axis
    skew = float(np.mean(proj**3))
    if abs(skew) < SKEW_TOL:
        anchor = proj[np.argmax(np.abs(proj))]
        if anchor < 0.0:
            return -axis
        return axis
    if skew < 0.0:
        return -axis
    return axis


def to_simulation_coords(points) -> tuple[np.ndarray, FrameTransform]:
    """Fit a principal-axis frame to ``points`` and express them in it.

    Parameters
    ----------
    points : (n, 2) array_like, n >= 3 and not collinear.

    Returns
    -------
    points_sc : (n, 2) ndarray of coordinates in the fitted frame.
    transform : FrameTransform mapping the frame back to physical space.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ValueError("points must be an (n, 2) array with n >= 3")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered / pts.shape[0]
    evals, evecs = np.linalg.eigh(cov)  # ascending eigenvalues
    if evals[0] <= max(evals[1], 1.0) * 1e-12:
        raise DegenerateGeometryError(
            "points are (nearly) collinear; principal frame is undefined"
        )
    first = _fix_sign(centered, evecs[:, 1])
    second = _fix_sign(centered, evecs[:, 0])
    rot = np.column_stack([first, second])
    if np.linalg.det(rot) < 0.0:
        rot[:, 1] = -rot[:, 1]
    transform = FrameTransform(centroid, rot)
    return centered @ rot, transform


def map_vector(transform: FrameTransform, v) -> np.ndarray:
    """Rotate vector quantities into the simulation frame (no translation).

    Accepts a single (2,) vector or an (n, 2) stack of row vectors.
    """
    v = np.asarray(v, dtype=np.float64)
    return v @ transform.rotation


def rotate_stress_to_frame(transform: FrameTransform, stress) -> np.ndarray:
    """Rotate Voigt stress rows (s_xx, s_yy, s_xy) into the simulation frame.

    Implements sigma_sc = R^T sigma R on each row.
    """
    s = np.atleast_2d(np.asarray(stress, dtype=np.float64))
    r = transform.rotation
    sxx, syy, sxy = s[:, 0], s[:, 1], s[:, 2]
    out = np.empty_like(s)
    a, b = r[0, 0], r[0, 1]
    c, d = r[1, 0], r[1, 1]
    # R^T [sxx sxy; sxy syy] R, expanded per component
    out[:, 0] = a * (a * sxx + c * sxy) + c * (a * sxy + c * syy)
    out[:, 1] = b * (b * sxx + d * sxy) + d * (b * sxy + d * syy)
    out[:, 2] = b * (a * sxx + c * sxy) + d * (a * sxy + c * syy)
    return out if np.asarray(stress).ndim == 2 else out[0]


def map_points_back(transform: FrameTransform, points_sc) -> np.ndarray:
    """Invert the frame: simulation coordinates back to physical points."""
    pts = np.asarray(points_sc, dtype=np.float64)
    return pts @ transform.rotation.T + transform.translation


def map_output_back(
    transform: FrameTransform, displacement, stress
) -> tuple[np.ndarray, np.ndarray]:
    """Map per-node displacement (n, 2) and Voigt stress (n, 3) predictions
    from the simulation frame to the physical frame."""
    r = transform.rotation
    disp = np.asarray(displacement, dtype=np.float64) @ r.T
    s = np.atleast_2d(np.asarray(stress, dtype=np.float64))
    sxx, syy, sxy = s[:, 0], s[:, 1], s[:, 2]
    out = np.empty_like(s)
    a, b = r[0, 0], r[0, 1]
    c, d = r[1, 0], r[1, 1]
    # R sigma R^T per row
    out[:, 0] = a * (a * sxx + b * sxy) + b * (a * sxy + b * syy)
    out[:, 1] = c * (c * sxx + d * sxy) + d * (c * sxy + d * syy)
    out[:, 2] = c * (a * sxx + b * sxy) + d * (a * sxy + b * syy)
    if np.asarray(stress).ndim == 1:
        return disp, out[0]
    return disp, out
