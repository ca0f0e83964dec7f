"""Sample records, dataset generation, persistence, and OOD variants.

Datasets are JSON Lines files (one sample per row) with a sidecar
``<path>.meta.json`` recording the generation parameters so that
out-of-distribution variants can be regenerated consistently.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .coords import FrameTransform, to_simulation_coords
from .fem import FemSolution, solve_sample
from .geometry import (
    BC_DIRICHLET_HOM,
    BC_DIRICHLET_NONHOM,
    BC_INTERIOR,
    BC_NEUMANN,
    BodyForce,
    BoundaryAssignmentError,
    BoundarySpec,
    Material,
    Mesh,
    MeshingError,
    assign_bcs,
    gen_geometry,
    jitter_nodes,
    triangulate,
    validate_boundary_spec,
)
from .seeding import derive_seed, rng_from

log = logging.getLogger(__name__)

__all__ = [
    "GenConfig",
    "SampleRecord",
    "generate_dataset",
    "load_dataset",
    "read_meta",
    "split_dataset",
    "make_ood",
    "OOD_VARIANTS",
]

DATASET_FORMAT_VERSION = 1
OOD_VARIANTS = ("scale_half", "scale_double", "disconnected_bc", "rot_translate")

# derivation tags for independent random streams
_TAG_GEOMETRY = 0
_TAG_JITTER_GATE = 1
_TAG_JITTER = 2
_TAG_BC = 3


@dataclass(frozen=True)
class GenConfig:
    """Parameters of one dataset generation run."""

    n_geoms: int = 200
    bcs_per_geom: int = 3
    h: float = 0.45
    seed: int = 0
    n_ctrl: int = 8
    radius_range: tuple[float, float] = (0.75, 1.25)
    youngs_modulus: float = 100.0
    poisson_ratio: float = 0.3
    jitter_fraction: float = 0.5
    jitter_sigma: float = 0.01
    scale: float = 1.0
    bc_style: str = "contiguous"  # or "disconnected"

    @property
    def material(self) -> Material:
        return Material(self.youngs_modulus, self.poisson_ratio)


@dataclass
class SampleRecord:
    """One training example: geometry, boundary data, FEM targets, frame."""

    sample_id: str
    geom_id: int
    seed: int
    mesh: Mesh
    bcs: BoundarySpec
    material: Material
    solution: FemSolution
    transform: FrameTransform
    tag: Optional[str] = None  # train/val/test, assigned by the split


def _record_to_json(rec: SampleRecord) -> str:
    bc_rows = [
        {
            "kind": rec.bcs.kinds[i],
            "vector": [float(v) for v in rec.bcs.vectors[i]],
            "magnitude": float(rec.bcs.magnitudes[i]),
        }
        for i in range(rec.mesh.n_nodes)
    ]
    body = rec.bcs.body_force
    doc = {
        "sample_id": rec.sample_id,
        "geom_id": rec.geom_id,
        "seed": rec.seed,
        "nodes": [[float(x), float(y)] for x, y in rec.mesh.nodes],
        "triangles": [[int(a), int(b), int(c)] for a, b, c in rec.mesh.triangles],
        "boundary": [int(i) for i in rec.mesh.boundary_nodes],
        "bc": bc_rows,
        "body_force": None
        if body is None
        else {
            "center": [float(body.center[0]), float(body.center[1])],
            "radius": float(body.radius),
            "density": [float(body.density[0]), float(body.density[1])],
        },
        "material": {
            "E": float(rec.material.youngs_modulus),
            "nu": float(rec.material.poisson_ratio),
        },
        "displacement": [[float(a), float(b)] for a, b in rec.solution.displacement],
        "stress": [[float(a), float(b), float(c)] for a, b, c in rec.solution.stress],
        "transform": {
            "t": [float(rec.transform.translation[0]), float(rec.transform.translation[1])],
            "R": [[float(v) for v in row] for row in rec.transform.rotation],
        },
    }
    return json.dumps(doc, separators=(",", ":"))


def _record_from_json(line: str, char_length: float) -> SampleRecord:
    doc = json.loads(line)
    mesh = Mesh(
        np.asarray(doc["nodes"], dtype=np.float64),
        np.asarray(doc["triangles"], dtype=np.int64),
        np.asarray(doc["boundary"], dtype=np.int64),
        char_length,
    )
    kinds = [row["kind"] for row in doc["bc"]]
    vectors = np.asarray([row["vector"] for row in doc["bc"]], dtype=np.float64)
    magnitudes = np.asarray([row["magnitude"] for row in doc["bc"]], dtype=np.float64)
    body = None
    if doc["body_force"] is not None:
        bf = doc["body_force"]
        body = BodyForce(np.asarray(bf["center"]), bf["radius"], np.asarray(bf["density"]))
    bcs = BoundarySpec(kinds, vectors, magnitudes, body_force=body)
    material = Material(doc["material"]["E"], doc["material"]["nu"])
    solution = FemSolution(
        np.asarray(doc["displacement"], dtype=np.float64),
        np.asarray(doc["stress"], dtype=np.float64),
    )
    transform = FrameTransform(
        np.asarray(doc["transform"]["t"], dtype=np.float64),
        np.asarray(doc["transform"]["R"], dtype=np.float64),
    )
    return SampleRecord(
        doc["sample_id"], doc["geom_id"], doc["seed"], mesh, bcs, material, solution, transform
    )


def assign_bcs_disconnected(mesh: Mesh, seed: int) -> BoundarySpec:
    """Out-of-distribution variant: Dirichlet and Neumann conditions each
    split over two disjoint boundary arcs (four disjoint arcs total)."""
    rng = rng_from(seed)
    m = len(mesh.boundary_nodes)
    occupied = np.zeros(m, dtype=bool)

    def place(length):
        # one spare node of padding keeps separately placed arcs from
        # merging into a single contiguous run
        starts = [
            s
            for s in range(m)
            if not occupied[(s - 1 + np.arange(length + 2)) % m].any()
        ]
        if not starts:
            raise BoundaryAssignmentError(
                f"boundary of {m} nodes cannot host four disjoint arcs"
            )
        start = starts[int(rng.integers(len(starts)))]
        pos = (start + np.arange(length)) % m
        occupied[pos] = True
        return pos

    frac_d = rng.uniform(0.10, 0.30)
    len_d = max(2, int(round(frac_d * m / 2.0)))
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
    len_n = max(2, int(round(frac_n * m / 2.0)))
    mag_n = rng.uniform(0.5, 2.0)
    theta_n = rng.uniform(0.0, 2.0 * np.pi)
    neu_vec = mag_n * np.array([np.cos(theta_n), np.sin(theta_n)])

    d_pos = np.concatenate([place(len_d), place(len_d)])
    n_pos = np.concatenate([place(len_n), place(len_n)])

    kinds = [BC_INTERIOR] * mesh.n_nodes
    vectors = np.zeros((mesh.n_nodes, 2))
    for pos in d_pos:
        node = int(mesh.boundary_nodes[pos])
        kinds[node] = dir_kind
        vectors[node] = dir_vec
    for pos in n_pos:
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

    spec = BoundarySpec(kinds, vectors, np.linalg.norm(vectors, axis=1), body_force=body)
    validate_boundary_spec(mesh, spec)
    return spec


def _build_geometry(cfg: GenConfig, geom_id: int) -> Mesh:
    geom_seed = derive_seed(cfg.seed, geom_id, _TAG_GEOMETRY)
    lo, hi = cfg.radius_range
    curve = gen_geometry(
        geom_seed, cfg.n_ctrl, (lo * cfg.scale, hi * cfg.scale)
    )
    mesh = triangulate(curve, cfg.h)
    gate = rng_from(derive_seed(cfg.seed, geom_id, _TAG_JITTER_GATE)).random()
    if gate < cfg.jitter_fraction and cfg.jitter_sigma > 0:
        mesh = jitter_nodes(
            mesh, cfg.jitter_sigma, derive_seed(cfg.seed, geom_id, _TAG_JITTER)
        )
    return mesh


def generate_dataset(cfg: GenConfig, out_path: str) -> tuple[int, int]:
    """Generate the dataset file; returns (samples written, failures skipped).

    Each geometry is meshed once (with optional coordinate-noise
    augmentation) and solved under ``bcs_per_geom`` random boundary
    conditions; failing samples are logged and skipped.
    """
    written = 0
    failed = 0
    material = cfg.material
    with open(out_path, "w", encoding="utf-8") as fh:
        for geom_id in range(cfg.n_geoms):
            try:
                mesh = _build_geometry(cfg, geom_id)
                _, transform = to_simulation_coords(mesh.nodes)
            except (MeshingError, BoundaryAssignmentError) as exc:
                log.warning("geometry %d skipped: %s", geom_id, exc)
                failed += cfg.bcs_per_geom
                continue
            for variant in range(cfg.bcs_per_geom):
                bc_seed = derive_seed(cfg.seed, geom_id, _TAG_BC, variant)
                try:
                    if cfg.bc_style == "disconnected":
                        bcs = assign_bcs_disconnected(mesh, bc_seed)
                    else:
                        bcs = assign_bcs(mesh, bc_seed)
                    solution = solve_sample(mesh, material, bcs)
                except Exception as exc:  # noqa: BLE001 - skip-and-log contract
                    log.warning(
                        "sample g%04db%d skipped: %s", geom_id, variant, exc
                    )
                    failed += 1
                    continue
                rec = SampleRecord(
                    f"g{geom_id:04d}b{variant}",
                    geom_id,
                    bc_seed,
                    mesh,
                    bcs,
                    material,
                    solution,
                    transform,
                )
                fh.write(_record_to_json(rec))
                fh.write("\n")
                written += 1
    meta = dict(asdict(cfg))
    meta["radius_range"] = list(cfg.radius_range)
    with open(out_path + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump({"format_version": DATASET_FORMAT_VERSION, "gen": meta}, fh, indent=1)
        fh.write("\n")
    return written, failed


def read_meta(path: str) -> GenConfig:
    with open(path + ".meta.json", encoding="utf-8") as fh:
        doc = json.load(fh)
    gen = doc["gen"]
    gen["radius_range"] = tuple(gen["radius_range"])
    return GenConfig(**gen)


def load_dataset(path: str) -> list[SampleRecord]:
    try:
        char_length = read_meta(path).h
    except FileNotFoundError:
        char_length = float("nan")
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(_record_from_json(line, char_length))
    return records


def split_dataset(
    records: list[SampleRecord], seed: int
) -> tuple[list[int], list[int], list[int]]:
    """70/10/20 split by geometry: all BC variants of one geometry land in
    the same partition."""
    if not records:
        raise ValueError("dataset is empty")
    geom_ids = sorted({r.geom_id for r in records})
    rng = rng_from(seed)
    order = [geom_ids[i] for i in rng.permutation(len(geom_ids))]
    n = len(order)
    n_train = int(np.floor(0.7 * n))
    n_val = int(np.floor(0.1 * n))
    train_g = set(order[:n_train])
    val_g = set(order[n_train : n_train + n_val])
    splits: tuple[list[int], list[int], list[int]] = ([], [], [])
    for i, rec in enumerate(records):
        if rec.geom_id in train_g:
            rec.tag = "train"
            splits[0].append(i)
        elif rec.geom_id in val_g:
            rec.tag = "val"
            splits[1].append(i)
        else:
            rec.tag = "test"
            splits[2].append(i)
    return splits


# ---------------------------------------------------------------------------
# Out-of-distribution datasets
# ---------------------------------------------------------------------------

def _rigid_motion_dataset(base_path: str, seed: int, out_path: str) -> tuple[int, int]:
    """Apply a random rigid motion to every sample of an existing dataset,
    co-rotating all vectors and targets, and refit the simulation frame."""
    meta = read_meta(base_path)
    records = load_dataset(base_path)
    with open(out_path, "w", encoding="utf-8") as fh:
        for i, rec in enumerate(records):
            rng = rng_from(derive_seed(seed, i))
            theta = rng.uniform(0.0, 2.0 * np.pi)
            q = np.array(
                [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
            )
            shift = rng.uniform(-3.0, 3.0, 2)
            nodes = rec.mesh.nodes @ q.T + shift
            mesh = Mesh(nodes, rec.mesh.triangles, rec.mesh.boundary_nodes, meta.h)
            body = rec.bcs.body_force
            if body is not None:
                body = BodyForce(q @ body.center + shift, body.radius, q @ body.density)
            bcs = BoundarySpec(
                list(rec.bcs.kinds),
                rec.bcs.vectors @ q.T,
                rec.bcs.magnitudes.copy(),
                body_force=body,
            )
            disp = rec.solution.displacement @ q.T
            s = rec.solution.stress
            sxx, syy, sxy = s[:, 0], s[:, 1], s[:, 2]
            a, b = q[0, 0], q[0, 1]
            c, d = q[1, 0], q[1, 1]
            rot = np.empty_like(s)
            rot[:, 0] = a * (a * sxx + b * sxy) + b * (a * sxy + b * syy)
            rot[:, 1] = c * (c * sxx + d * sxy) + d * (c * sxy + d * syy)
            rot[:, 2] = c * (a * sxx + b * sxy) + d * (a * sxy + b * syy)
            _, transform = to_simulation_coords(nodes)
            moved = SampleRecord(
                rec.sample_id,
                rec.geom_id,
                rec.seed,
                mesh,
                bcs,
                rec.material,
                FemSolution(disp, rot),
                transform,
            )
            fh.write(_record_to_json(moved))
            fh.write("\n")
    with open(base_path + ".meta.json", encoding="utf-8") as fh:
        doc = json.load(fh)
    with open(out_path + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    return len(records), 0


def make_ood(base_path: str, variant: str, seed: int, out_path: str) -> tuple[int, int]:
    """Build an out-of-distribution dataset from a base dataset.

    ``scale_half``/``scale_double`` regenerate the geometries at 0.5x/2x
    size with the same mesh characteristic length; ``disconnected_bc``
    regenerates with split boundary arcs; ``rot_translate`` rigidly moves
    the existing samples.
    """
    if variant not in OOD_VARIANTS:
        raise ValueError(f"unknown OOD variant {variant!r}")
    if variant == "rot_translate":
        return _rigid_motion_dataset(base_path, seed, out_path)
    base = read_meta(base_path)
    if variant == "scale_half":
        cfg = replace(base, scale=base.scale * 0.5, seed=seed)
    elif variant == "scale_double":
        cfg = replace(base, scale=base.scale * 2.0, seed=seed)
    else:
        cfg = replace(base, bc_style="disconnected", seed=seed)
    return generate_dataset(cfg, out_path)
