"""Random 2D geometry generation, triangulation, and boundary sampling.

The data pipeline starts here: a closed composite cubic Bezier curve is
drawn through control points at random polar angles, triangulated with a
Delaunay mesh over a jittered interior grid, and decorated with randomly
placed Dirichlet/Neumann arcs plus an optional body-force disk.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import Delaunay

log = logging.getLogger(__name__)

__all__ = [
    "ClosedCurve",
    "Mesh",
    "BodyForce",
    "BoundarySpec",
    "Material",
    "GeometryGenerationError",
    "MeshingError",
    "BoundaryAssignmentError",
    "gen_geometry",
    "triangulate",
    "assign_bcs",
    "jitter_nodes",
    "polygon_area",
    "points_in_polygon",
]

GENERATION_BUDGET = 1000
ARC_SAMPLES_PER_SEGMENT = 20

BC_INTERIOR = "interior"
BC_DIRICHLET_HOM = "dirichlet_hom"
BC_DIRICHLET_NONHOM = "dirichlet_nonhom"
BC_NEUMANN = "neumann"
BC_KINDS = (BC_INTERIOR, BC_DIRICHLET_HOM, BC_DIRICHLET_NONHOM, BC_NEUMANN)


class GeometryGenerationError(RuntimeError):
    """Raised when the rejection-sampling budget for curves is exhausted."""


class MeshingError(RuntimeError):
    """Raised when triangulation cannot produce a valid mesh."""


class BoundaryAssignmentError(RuntimeError):
    """Raised when a mesh boundary cannot host the requested BC arcs."""


# ---------------------------------------------------------------------------
# Polygon utilities
# ---------------------------------------------------------------------------

def polygon_area(points) -> float:
    """Signed shoelace area of a polygon (closing edge implied)."""
    p = np.asarray(points, dtype=np.float64)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def points_in_polygon(points, polygon) -> np.ndarray:
    """Vectorized even-odd (ray casting) point-in-polygon test.

    ``polygon`` is an (m, 2) array of vertices without a closing
    duplicate. Points on an edge may land on either side; callers keep
    query points away from edges.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    poly = np.asarray(polygon, dtype=np.float64)
    x, y = pts[:, 0][:, None], pts[:, 1][:, None]
    x1, y1 = poly[:, 0][None, :], poly[:, 1][None, :]
    x2, y2 = np.roll(poly[:, 0], -1)[None, :], np.roll(poly[:, 1], -1)[None, :]
    crosses = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_at_y = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
    hits = crosses & (x < x_at_y)
    return hits.sum(axis=1) % 2 == 1


def _segments_cross(p: np.ndarray) -> bool:
    """True if the closed polyline ``p`` (no closing duplicate) has any
    properly crossing pair of non-adjacent segments."""
    a = p
    b = np.roll(p, -1, axis=0)
    m = len(p)

    def cross(o, u, v):
        return (u[..., 0] - o[..., 0]) * (v[..., 1] - o[..., 1]) - (
            u[..., 1] - o[..., 1]
        ) * (v[..., 0] - o[..., 0])

    i_idx, j_idx = np.triu_indices(m, k=2)
    # skip the wrap-around adjacency (first and last segment share a point)
    keep = ~((i_idx == 0) & (j_idx == m - 1))
    i_idx, j_idx = i_idx[keep], j_idx[keep]
    p1, p2 = a[i_idx], b[i_idx]
    q1, q2 = a[j_idx], b[j_idx]
    d1 = cross(q1, q2, p1)
    d2 = cross(q1, q2, p2)
    d3 = cross(p1, p2, q1)
    d4 = cross(p1, p2, q2)
    return bool(np.any((d1 * d2 < 0) & (d3 * d4 < 0)))


# ---------------------------------------------------------------------------
# Closed Bezier curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClosedCurve:
    """Simple closed composite cubic Bezier curve.

    ``segments`` holds one (4, 2) control quadruple per cubic piece;
    ``arc_samples`` is the closed polyline approximation (last point
    repeats the first).
    """

    control_points: np.ndarray
    segments: np.ndarray
    arc_samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.arc_samples, dtype=np.float64)
        if np.linalg.norm(samples[0] - samples[-1]) > 1e-12:
            raise ValueError("arc polyline must be closed")
        loop = samples[:-1]
        if polygon_area(loop) <= 0.0:
            raise ValueError("curve must be counter-clockwise with area > 0")
        if _segments_cross(loop):
            raise ValueError("curve polyline must be simple")

    @property
    def polyline(self) -> np.ndarray:
        """Closed polyline without the duplicated last vertex."""
        return np.asarray(self.arc_samples)[:-1]

    @property
    def area(self) -> float:
        return polygon_area(self.polyline)

    @property
    def diameter(self) -> float:
        p = self.polyline
        lo, hi = p.min(axis=0), p.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    @classmethod
    def from_polyline(cls, points) -> "ClosedCurve":
        """Wrap an explicit simple CCW polygon as a degenerate curve."""
        pts = np.asarray(points, dtype=np.float64)
        if np.linalg.norm(pts[0] - pts[-1]) > 1e-12:
            pts = np.vstack([pts, pts[0]])
        return cls(pts[:-1].copy(), np.zeros((0, 4, 2)), pts)


def _bezier_through(points: np.ndarray, samples_per_segment: int):
    """Closed C1 cubic Bezier through ``points`` with central-difference
    tangents (each knot's outgoing handle mirrors its incoming one)."""
    n = len(points)
    tangents = (np.roll(points, -1, axis=0) - np.roll(points, 1, axis=0)) / 2.0
    b0 = points
    b1 = points + tangents / 3.0
    b2 = np.roll(points, -1, axis=0) - np.roll(tangents, -1, axis=0) / 3.0
    b3 = np.roll(points, -1, axis=0)
    segments = np.stack([b0, b1, b2, b3], axis=1)  # (n, 4, 2)
    t = np.linspace(0.0, 1.0, samples_per_segment + 1)[:-1]
    w0 = (1 - t) ** 3
    w1 = 3 * (1 - t) ** 2 * t
    w2 = 3 * (1 - t) * t**2
    w3 = t**3
    arcs = (
        w0[None, :, None] * b0[:, None, :]
        + w1[None, :, None] * b1[:, None, :]
        + w2[None, :, None] * b2[:, None, :]
        + w3[None, :, None] * b3[:, None, :]
    ).reshape(n * samples_per_segment, 2)
    closed = np.vstack([arcs, arcs[:1]])
    return segments, closed


def gen_geometry(
    seed: int,
    n_ctrl: int = 8,
    radius_range: tuple[float, float] = (0.75, 1.25),
) -> ClosedCurve:
    """Draw a random simple closed curve.

    Control points sit at sorted random polar angles with radii uniform
    in ``radius_range``; candidates failing the simplicity/area checks
    are rejected and redrawn from a derived seed, up to
    ``GENERATION_BUDGET`` attempts.
    """
    if n_ctrl < 4:
        raise ValueError("n_ctrl must be >= 4")
    lo, hi = float(radius_range[0]), float(radius_range[1])
    if not (0.0 < lo <= hi):
        raise ValueError("radius_range must be within (0, inf)")
    for attempt in range(GENERATION_BUDGET):
        rng = np.random.default_rng(np.random.SeedSequence([seed, attempt]))
        angles = np.sort(rng.uniform(0.0, 2.0 * np.pi, n_ctrl))
        gaps = np.diff(np.concatenate([angles, [angles[0] + 2.0 * np.pi]]))
        if gaps.min() < 0.02:  # near-coincident knots make sliver meshes
            continue
        radii = rng.uniform(lo, hi, n_ctrl)
        points = np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])
        segments, arc = _bezier_through(points, ARC_SAMPLES_PER_SEGMENT)
        loop = arc[:-1]
        if polygon_area(loop) <= 0.0 or _segments_cross(loop):
            continue
        return ClosedCurve(points, segments, arc)
    raise GeometryGenerationError(
        f"no simple closed curve found in {GENERATION_BUDGET} attempts (seed={seed})"
    )


# ---------------------------------------------------------------------------
# Meshes
# ---------------------------------------------------------------------------

@dataclass
class Mesh:
    """Planar triangulation with an ordered boundary cycle.

    ``triangles`` rows are counter-clockwise; ``boundary_nodes`` walks
    the single boundary cycle once, counter-clockwise.
    """

    nodes: np.ndarray  # (n, 2)
    triangles: np.ndarray  # (m, 3) int
    boundary_nodes: np.ndarray  # (b,) int, ordered cycle
    char_length: float

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=np.float64)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        self.boundary_nodes = np.asarray(self.boundary_nodes, dtype=np.int64)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.nonzero(mask)[0]

    def triangle_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        return 0.5 * (
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
        )

    def edge_set(self) -> set[tuple[int, int]]:
        edges = set()
        for a, b, c in self.triangles:
            for u, v in ((a, b), (b, c), (c, a)):
                edges.add((min(u, v), max(u, v)))
        return edges

    def copy(self) -> "Mesh":
        return Mesh(
            self.nodes.copy(),
            self.triangles.copy(),
            self.boundary_nodes.copy(),
            self.char_length,
        )


def _edge_counts(triangles: np.ndarray) -> dict[tuple[int, int], int]:
    counts: dict[tuple[int, int], int] = {}
    for a, b, c in triangles:
        for u, v in ((a, b), (b, c), (c, a)):
            key = (min(u, v), max(u, v))
            counts[key] = counts.get(key, 0) + 1
    return counts


def _boundary_cycle(triangles: np.ndarray, n_nodes: int) -> np.ndarray:
    """Extract the boundary cycle (edges incident to exactly one triangle).

    Raises MeshingError unless those edges form a single closed cycle.
    """
    counts = _edge_counts(triangles)
    if any(c > 2 for c in counts.values()):
        raise MeshingError("an edge is shared by more than two triangles")
    boundary_edges = [e for e, c in counts.items() if c == 1]
    adj: dict[int, list[int]] = {}
    for u, v in boundary_edges:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    if not adj or any(len(nb) != 2 for nb in adj.values()):
        raise MeshingError("boundary edges do not form a simple cycle")
    start = min(adj)
    cycle = [start]
    prev, cur = -1, start
    while True:
        a, b = adj[cur]
        nxt = b if a == prev else a
        if nxt == start:
            break
        cycle.append(nxt)
        prev, cur = cur, nxt
        if len(cycle) > len(boundary_edges):
            raise MeshingError("boundary traversal failed to close")
    if len(cycle) != len(boundary_edges) or len(cycle) != len(adj):
        raise MeshingError("boundary has more than one cycle")
    return np.asarray(cycle, dtype=np.int64)


def validate_mesh(mesh: Mesh) -> None:
    """Check all structural mesh invariants; raises MeshingError if broken."""
    areas = mesh.triangle_areas()
    if len(areas) == 0 or np.any(areas <= 0.0):
        raise MeshingError("every triangle must have positive signed area")
    cycle = _boundary_cycle(mesh.triangles, mesh.n_nodes)
    if len(cycle) != len(mesh.boundary_nodes):
        raise MeshingError("boundary_nodes does not match the boundary cycle")
    if set(cycle.tolist()) != set(mesh.boundary_nodes.tolist()):
        raise MeshingError("boundary_nodes does not match the boundary cycle")
    used = np.unique(mesh.triangles)
    if len(used) != mesh.n_nodes:
        raise MeshingError("mesh contains unreferenced nodes")


def _resample_boundary(polyline: np.ndarray, h: float) -> np.ndarray:
    """Resample a closed polyline at (approximately) equal spacing h."""
    closed = np.vstack([polyline, polyline[:1]])
    seg = np.diff(closed, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    n_b = int(round(total / h))
    if n_b < 3:
        raise MeshingError("fewer than 3 boundary samples; h too coarse")
    targets = np.arange(n_b) * total / n_b
    idx = np.searchsorted(cum, targets, side="right") - 1
    idx = np.clip(idx, 0, len(seg_len) - 1)
    frac = (targets - cum[idx]) / np.where(seg_len[idx] > 0, seg_len[idx], 1.0)
    return closed[idx] + frac[:, None] * seg[idx]


def _distance_to_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Distance from each point to the closed polygon's edges."""
    a = polygon
    b = np.roll(polygon, -1, axis=0)
    ab = b - a  # (m, 2)
    ap = points[:, None, :] - a[None, :, :]  # (k, m, 2)
    denom = np.maximum(np.einsum("md,md->m", ab, ab), 1e-300)
    t = np.clip(np.einsum("kmd,md->km", ap, ab) / denom, 0.0, 1.0)
    closest = a[None, :, :] + t[:, :, None] * ab[None, :, :]
    d = np.linalg.norm(points[:, None, :] - closest, axis=2)
    return d.min(axis=1)


def _mesh_seed(curve: ClosedCurve, h: float) -> int:
    """Deterministic jitter seed derived from the curve and target size."""
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(curve.polyline).tobytes())
    digest.update(np.float64(h).tobytes())
    return int.from_bytes(digest.digest()[:8], "little")


def triangulate(curve: ClosedCurve, h: float) -> Mesh:
    """Delaunay-mesh the region bounded by ``curve`` at target size ``h``.

    The boundary is resampled at spacing ~h, the interior is seeded with
    a jittered grid at spacing h, and triangles whose centroid falls
    outside the polygon are discarded.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if h >= curve.diameter:
        raise ValueError("h must be smaller than the curve diameter")
    boundary = _resample_boundary(curve.polyline, h)
    rng = np.random.default_rng(_mesh_seed(curve, h))
    lo = boundary.min(axis=0)
    hi = boundary.max(axis=0)
    nx = max(int(np.floor((hi[0] - lo[0]) / h)), 0)
    ny = max(int(np.floor((hi[1] - lo[1]) / h)), 0)
    gx, gy = np.meshgrid(
        lo[0] + (np.arange(nx) + 0.5) * h, lo[1] + (np.arange(ny) + 0.5) * h
    )
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    jitter = rng.uniform(-0.25 * h, 0.25 * h, grid.shape)
    candidates = grid + jitter
    if len(candidates):
        inside = points_in_polygon(candidates, boundary)
        candidates = candidates[inside]
    if len(candidates):
        far = _distance_to_polygon(candidates, boundary) >= 0.5 * h
        candidates = candidates[far]
    points = np.vstack([boundary, candidates])

    tri = Delaunay(points)
    simplices = tri.simplices.astype(np.int64)
    centroids = points[simplices].mean(axis=1)
    keep = points_in_polygon(centroids, boundary)
    simplices = simplices[keep]
    if len(simplices) == 0:
        raise MeshingError("no triangles remain after clipping to the polygon")

    p = points[simplices]
    areas = 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    )
    flip = areas < 0
    simplices[flip] = simplices[flip][:, ::-1]
    simplices = simplices[np.abs(areas) > 1e-12 * h * h]

    used = np.unique(simplices)
    remap = -np.ones(len(points), dtype=np.int64)
    remap[used] = np.arange(len(used))
    nodes = points[used]
    triangles = remap[simplices]
    cycle = _boundary_cycle(triangles, len(nodes))
    if polygon_area(nodes[cycle]) < 0:
        cycle = cycle[::-1].copy()
    mesh = Mesh(nodes, triangles, cycle, float(h))
    validate_mesh(mesh)
    return mesh


# ---------------------------------------------------------------------------
# Boundary conditions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Material:
    """Linear elastic material (plane stress)."""

    youngs_modulus: float = 100.0
    poisson_ratio: float = 0.3

    def __post_init__(self):
        if self.youngs_modulus <= 0:
            raise ValueError("Young's modulus must be positive")
        if not (0.0 <= self.poisson_ratio < 0.5):
            raise ValueError("Poisson ratio must lie in [0, 0.5)")


@dataclass(frozen=True)
class BodyForce:
    center: np.ndarray  # (2,)
    radius: float
    density: np.ndarray  # (2,) force per unit area

    def __post_init__(self):
        object.__setattr__(
            self, "center", np.asarray(self.center, dtype=np.float64).reshape(2)
        )
        object.__setattr__(
            self, "density", np.asarray(self.density, dtype=np.float64).reshape(2)
        )
        if self.radius <= 0:
            raise ValueError("body force radius must be positive")


@dataclass
class BoundarySpec:
    """Per-node boundary conditions plus an optional body-force disk."""

    kinds: list[str]
    vectors: np.ndarray  # (n, 2)
    magnitudes: np.ndarray  # (n,)
    body_force: Optional[BodyForce] = None

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.magnitudes = np.asarray(self.magnitudes, dtype=np.float64)

    def mask(self, kind: str) -> np.ndarray:
        return np.asarray([k == kind for k in self.kinds], dtype=bool)

    @property
    def dirichlet_mask(self) -> np.ndarray:
        return self.mask(BC_DIRICHLET_HOM) | self.mask(BC_DIRICHLET_NONHOM)


def validate_boundary_spec(mesh: Mesh, spec: BoundarySpec) -> None:
    if len(spec.kinds) != mesh.n_nodes:
        raise ValueError("boundary spec size does not match mesh")
    for k in spec.kinds:
        if k not in BC_KINDS:
            raise ValueError(f"unknown BC kind {k!r}")
    interior = mesh.interior_nodes
    for i in interior:
        if spec.kinds[i] != BC_INTERIOR:
            raise ValueError(f"interior node {i} carries a boundary condition")
    if np.any(np.abs(np.linalg.norm(spec.vectors, axis=1) - spec.magnitudes) > 1e-12):
        raise ValueError("magnitudes must equal vector norms")
    # a contiguous Dirichlet arc of >= 2 nodes must pin both components
    cyc = mesh.boundary_nodes
    dmask = spec.dirichlet_mask[cyc]
    if dmask.sum() < 2:
        raise ValueError("need a Dirichlet arc of at least 2 boundary nodes")
    runs = _contiguous_runs(dmask)
    if not any(r >= 2 for r in runs):
        raise ValueError("Dirichlet nodes do not form a contiguous arc of >= 2")


def _contiguous_runs(mask: np.ndarray) -> list[int]:
    """Lengths of contiguous True runs on a cyclic mask."""
    m = len(mask)
    if mask.all():
        return [m]
    if not mask.any():
        return []
    # rotate so position 0 is False, then count linear runs
    start = int(np.argmin(mask))
    rolled = np.roll(mask, -start)
    runs, current = [], 0
    for v in rolled:
        if v:
            current += 1
        elif current:
            runs.append(current)
            current = 0
    if current:
        runs.append(current)
    return runs


def _arc_positions(start: int, length: int, m: int) -> np.ndarray:
    return (start + np.arange(length)) % m


def assign_bcs(mesh: Mesh, seed: int) -> BoundarySpec:
    """Randomly place one Dirichlet arc, one disjoint Neumann arc, and
    (with probability 1/2) a body-force disk.

    Arc lengths cover fractions U(0.10, 0.30) of the boundary cycle;
    non-homogeneous Dirichlet displacements have magnitude U(0.01, 0.05),
    tractions U(0.5, 2.0), body-force density U(0.1, 0.5), directions
    uniform on the circle. Deterministic in ``seed``.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    m = len(mesh.boundary_nodes)
    n = mesh.n_nodes

    frac_d = rng.uniform(0.10, 0.30)
    len_d = max(2, int(round(frac_d * m)))
    start_d = int(rng.integers(m))
    dirichlet_pos = _arc_positions(start_d, len_d, m)

    homogeneous = rng.random() < 0.5
    if homogeneous:
        dir_vec = np.zeros(2)
        dir_kind = BC_DIRICHLET_HOM
    else:
        mag = rng.uniform(0.01, 0.05)
        theta = rng.uniform(0.0, 2.0 * np.pi)
        dir_vec = mag * np.array([np.cos(theta), np.sin(theta)])
        dir_kind = BC_DIRICHLET_NONHOM

    frac_n = rng.uniform(0.10, 0.30)
    len_n = max(2, int(round(frac_n * m)))
    occupied = np.zeros(m, dtype=bool)
    occupied[dirichlet_pos] = True
    valid_starts = [
        s
        for s in range(m)
        if not occupied[_arc_positions(s, len_n, m)].any()
    ]
    if not valid_starts:
        raise BoundaryAssignmentError(
            f"boundary of {m} nodes cannot host two disjoint arcs "
            f"({len_d} + {len_n} nodes)"
        )
    start_n = valid_starts[int(rng.integers(len(valid_starts)))]
    neumann_pos = _arc_positions(start_n, len_n, m)
    mag_n = rng.uniform(0.5, 2.0)
    theta_n = rng.uniform(0.0, 2.0 * np.pi)
    neu_vec = mag_n * np.array([np.cos(theta_n), np.sin(theta_n)])

    kinds = [BC_INTERIOR] * n
    vectors = np.zeros((n, 2))
    for pos in dirichlet_pos:
        node = int(mesh.boundary_nodes[pos])
        kinds[node] = dir_kind
        vectors[node] = dir_vec
    for pos in neumann_pos:
        node = int(mesh.boundary_nodes[pos])
        kinds[node] = BC_NEUMANN
        vectors[node] = neu_vec

    body = None
    interior = mesh.interior_nodes
    if rng.random() < 0.5 and len(interior) > 0:
        center = mesh.nodes[interior[int(rng.integers(len(interior)))]]
        mag_f = rng.uniform(0.1, 0.5)
        theta_f = rng.uniform(0.0, 2.0 * np.pi)
        density = mag_f * np.array([np.cos(theta_f), np.sin(theta_f)])
        body = BodyForce(center.copy(), 2.0 * mesh.char_length, density)

    spec = BoundarySpec(
        kinds, vectors, np.linalg.norm(vectors, axis=1), body_force=body
    )
    validate_boundary_spec(mesh, spec)
    return spec


# ---------------------------------------------------------------------------
# Coordinate-noise augmentation
# ---------------------------------------------------------------------------

def jitter_nodes(mesh: Mesh, sigma: float, seed: int) -> Mesh:
    """Perturb interior node coordinates with iid N(0, sigma^2) noise.

    Boundary nodes stay fixed. A node's perturbation is rejected if it
    would flip (make non-positive) any incident triangle, so the output
    mesh always satisfies the mesh invariants.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    out = mesh.copy()
    if sigma == 0.0:
        return out
    interior = mesh.interior_nodes
    if len(interior) == 0:
        return out
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    noise = rng.normal(0.0, sigma, (len(interior), 2))

    incident: dict[int, list[int]] = {int(i): [] for i in interior}
    for t_idx, tri in enumerate(mesh.triangles):
        for v in tri:
            if int(v) in incident:
                incident[int(v)].append(t_idx)

    nodes = out.nodes
    tris = out.triangles
    rejected = 0
    for row, node in enumerate(interior):
        candidate = nodes[node] + noise[row]
        old = nodes[node].copy()
        nodes[node] = candidate
        ok = True
        for t_idx in incident[int(node)]:
            a, b, c = tris[t_idx]
            area = 0.5 * (
                (nodes[b, 0] - nodes[a, 0]) * (nodes[c, 1] - nodes[a, 1])
                - (nodes[c, 0] - nodes[a, 0]) * (nodes[b, 1] - nodes[a, 1])
            )
            if area <= 1e-14:
                ok = False
                break
        if not ok:
            nodes[node] = old
            rejected += 1
    if rejected:
        log.debug("jitter_nodes rejected %d of %d perturbations", rejected, len(interior))
    return out
