"""Mesh-to-graph conversion and the structural graph operations used by
the models: random edge augmentation, graph powers, and top-k node
selection/restoration for the hierarchical network.

Graphs carry a fixed 14-column node feature layout::

    [x, y, interior, boundary, dirichlet_hom, dirichlet_nonhom, neumann,
     bc_x, bc_y, bc_magnitude, body_force, f_x, f_y, f_magnitude]

and 4-column edge features ``[distance, dx, dy, augmented_flag]`` with
all coordinates and vectors expressed in the simulation frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .coords import FrameTransform, map_vector, rotate_stress_to_frame
from .fem import FemSolution
from .geometry import (
    BC_DIRICHLET_HOM,
    BC_DIRICHLET_NONHOM,
    BC_NEUMANN,
    BoundarySpec,
    Mesh,
)

__all__ = [
    "Graph",
    "SelectionRecord",
    "NODE_FEATURE_COLUMNS",
    "mesh_to_graph",
    "augment_edges",
    "graph_power",
    "topk_select",
    "restore",
    "adjacency",
    "induced_subgraph",
    "merge_graphs",
    "mesh_edges",
]

NODE_FEATURE_COLUMNS = (
    "x",
    "y",
    "interior",
    "boundary",
    "dirichlet_hom",
    "dirichlet_nonhom",
    "neumann",
    "bc_x",
    "bc_y",
    "bc_magnitude",
    "body_force",
    "f_x",
    "f_y",
    "f_magnitude",
)
N_NODE_FEATURES = 14
N_EDGE_FEATURES = 4


@dataclass
class Graph:
    """Directed attributed graph; edges always come in symmetric pairs."""

    n_nodes: int
    edges: np.ndarray  # (e, 2) int64 (src, dst)
    node_feat: np.ndarray  # (n, 14)
    edge_feat: np.ndarray  # (e, 4)
    targets: np.ndarray  # (n, 2) or (n, 3)

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.node_feat = np.asarray(self.node_feat, dtype=np.float64)
        self.edge_feat = np.asarray(self.edge_feat, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def undirected_edge_count(self) -> int:
        return self.n_edges // 2

    def copy(self) -> "Graph":
        return Graph(
            self.n_nodes,
            self.edges.copy(),
            self.node_feat.copy(),
            self.edge_feat.copy(),
            self.targets.copy(),
        )


@dataclass
class SelectionRecord:
    """Bookkeeping for one down-sampling step: which parent rows were
    kept and a snapshot of the parent features for restoration."""

    kept_indices: np.ndarray  # sorted, strictly increasing
    parent_size: int
    cached_features: np.ndarray  # (parent_size, F)

    def __post_init__(self):
        self.kept_indices = np.asarray(self.kept_indices, dtype=np.int64)


def mesh_edges(mesh: Mesh) -> np.ndarray:
    """Directed edge list from unique mesh edges, both directions,
    ordered deterministically (sorted undirected pairs, (i,j) then (j,i))."""
    und = sorted(mesh.edge_set())
    edges = np.empty((2 * len(und), 2), dtype=np.int64)
    for row, (i, j) in enumerate(und):
        edges[2 * row] = (i, j)
        edges[2 * row + 1] = (j, i)
    return edges


def _edge_features(positions: np.ndarray, edges: np.ndarray, augmented: float) -> np.ndarray:
    delta = positions[edges[:, 1]] - positions[edges[:, 0]]
    dist = np.linalg.norm(delta, axis=1)
    flag = np.full(len(edges), augmented)
    return np.column_stack([dist, delta[:, 0], delta[:, 1], flag])


def mesh_to_graph(
    mesh: Mesh,
    bcs: BoundarySpec,
    solution: FemSolution,
    transform: FrameTransform,
    target: str = "displacement",
) -> Graph:
    """Build the attributed graph for one sample in simulation coordinates.

    ``transform`` maps physical to simulation coordinates; pass
    ``FrameTransform.identity()`` to keep raw coordinates (the baseline
    configuration).
    """
    n = mesh.n_nodes
    if len(bcs.kinds) != n or len(solution.displacement) != n:
        raise ValueError("mesh, boundary spec, and solution sizes disagree")
    pos_sc = map_vector(transform, mesh.nodes - transform.translation)
    feat = np.zeros((n, N_NODE_FEATURES))
    feat[:, 0:2] = pos_sc
    boundary = np.zeros(n, dtype=bool)
    boundary[mesh.boundary_nodes] = True
    feat[:, 2] = ~boundary
    feat[:, 3] = boundary
    feat[:, 4] = bcs.mask(BC_DIRICHLET_HOM)
    feat[:, 5] = bcs.mask(BC_DIRICHLET_NONHOM)
    feat[:, 6] = bcs.mask(BC_NEUMANN)
    bc_sc = map_vector(transform, bcs.vectors)
    feat[:, 7:9] = bc_sc
    feat[:, 9] = bcs.magnitudes
    if bcs.body_force is not None:
        inside = (
            np.linalg.norm(mesh.nodes - bcs.body_force.center, axis=1)
            <= bcs.body_force.radius
        )
        density_sc = map_vector(transform, bcs.body_force.density)
        feat[inside, 10] = 1.0
        feat[inside, 11:13] = density_sc
        feat[inside, 13] = np.linalg.norm(density_sc)

    if target == "displacement":
        targets = map_vector(transform, solution.displacement)
    elif target == "stress":
        targets = rotate_stress_to_frame(transform, solution.stress)
    else:
        raise ValueError("target must be 'displacement' or 'stress'")

    edges = mesh_edges(mesh)
    edge_feat = _edge_features(pos_sc, edges, augmented=0.0)
    return Graph(n, edges, feat, edge_feat, targets)


def augment_edges(graph: Graph, a_perc: float, seed: int) -> Graph:
    """Add random long-range bidirectional edges (flagged in features).

    The number of new undirected edges is round(a_perc * current
    undirected edge count), sampled uniformly without replacement from
    unconnected node pairs.
    """
    if not (0.0 <= a_perc <= 1.0):
        raise ValueError("a_perc must lie in [0, 1]")
    out = graph.copy()
    m_new = int(round(a_perc * graph.undirected_edge_count))
    if m_new == 0:
        return out
    n = graph.n_nodes
    connected = np.zeros((n, n), dtype=bool)
    connected[graph.edges[:, 0], graph.edges[:, 1]] = True
    iu, ju = np.triu_indices(n, k=1)
    free = ~connected[iu, ju]
    candidates = np.column_stack([iu[free], ju[free]])
    if m_new > len(candidates):
        raise ValueError(
            f"graph too dense: cannot add {m_new} new undirected edges "
            f"({len(candidates)} free pairs)"
        )
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    chosen = candidates[rng.choice(len(candidates), size=m_new, replace=False)]
    new_edges = np.empty((2 * m_new, 2), dtype=np.int64)
    new_edges[0::2] = chosen
    new_edges[1::2] = chosen[:, ::-1]
    positions = graph.node_feat[:, 0:2]
    new_feat = _edge_features(positions, new_edges, augmented=1.0)
    out.edges = np.vstack([graph.edges, new_edges])
    out.edge_feat = np.vstack([graph.edge_feat, new_feat])
    return out


def adjacency(edges: np.ndarray, n_nodes: int) -> sp.csr_matrix:
    """Boolean adjacency matrix of a directed edge list."""
    if len(edges) == 0:
        return sp.csr_matrix((n_nodes, n_nodes), dtype=bool)
    data = np.ones(len(edges), dtype=bool)
    return sp.csr_matrix(
        (data, (edges[:, 0], edges[:, 1])), shape=(n_nodes, n_nodes), dtype=bool
    )


def graph_power(edges: np.ndarray, n_nodes: int, l: int) -> np.ndarray:
    """Edges of the l-th graph power: all ordered pairs (i, j), i != j,
    at shortest-path distance <= l in the input graph.

    Computed with boolean sparse-matrix products (identical support to a
    breadth-first search to depth l).
    """
    if l < 1:
        raise ValueError("l must be >= 1")
    a = adjacency(np.asarray(edges, dtype=np.int64).reshape(-1, 2), n_nodes)
    reach = a.copy()
    frontier = a
    for _ in range(l - 1):
        frontier = (frontier @ a).astype(bool)
        reach = (reach + frontier).astype(bool)
    reach = sp.coo_matrix(reach)
    mask = reach.row != reach.col
    out = np.column_stack([reach.row[mask], reach.col[mask]]).astype(np.int64)
    order = np.lexsort((out[:, 1], out[:, 0]))
    return out[order]


def topk_select(node_feat: np.ndarray, p: np.ndarray, r: float):
    """Select the ceil(r*n) nodes with the largest scalar projection of
    their features onto ``p`` (ties broken by lower index).

    Returns a SelectionRecord and the sigmoid gate values of the kept
    nodes (aligned with the sorted kept indices).
    """
    feat = np.asarray(node_feat, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    norm = np.linalg.norm(p)
    if norm == 0.0:
        raise ValueError("projection vector p must be nonzero")
    if not (0.0 < r <= 1.0):
        raise ValueError("keep ratio r must lie in (0, 1]")
    n = feat.shape[0]
    scores = feat @ p / norm
    k = math.ceil(r * n)
    order = np.argsort(-scores, kind="stable")
    kept = np.sort(order[:k])
    gates = 1.0 / (1.0 + np.exp(-scores[kept]))
    record = SelectionRecord(kept, n, feat.copy())
    return record, gates


def restore(selection: SelectionRecord, child_feat: np.ndarray) -> np.ndarray:
    """Place child rows back at their parent positions; removed nodes
    resume the cached pre-down-sampling features."""
    child = np.asarray(child_feat, dtype=np.float64)
    if child.shape[0] != len(selection.kept_indices):
        raise ValueError("child row count does not match kept indices")
    out = selection.cached_features.copy()
    out[selection.kept_indices] = child
    return out


def induced_subgraph(edges: np.ndarray, kept: np.ndarray) -> np.ndarray:
    """Reindexed edges among ``kept`` nodes (kept must be sorted)."""
    kept = np.asarray(kept, dtype=np.int64)
    lookup = -np.ones(int(edges.max(initial=0)) + 2, dtype=np.int64)
    lookup[kept] = np.arange(len(kept))
    src, dst = edges[:, 0], edges[:, 1]
    m = (lookup[src] >= 0) & (lookup[dst] >= 0)
    return np.column_stack([lookup[src[m]], lookup[dst[m]]])


def merge_graphs(graphs: list[Graph]) -> tuple[Graph, np.ndarray]:
    """Stack graphs block-diagonally for batched evaluation.

    Returns the merged graph and the node offsets of each component.
    """
    offsets = np.cumsum([0] + [g.n_nodes for g in graphs])
    edges = np.vstack([g.edges + off for g, off in zip(graphs, offsets[:-1])])
    merged = Graph(
        int(offsets[-1]),
        edges,
        np.vstack([g.node_feat for g in graphs]),
        np.vstack([g.edge_feat for g in graphs]),
        np.vstack([g.targets for g in graphs]),
    )
    return merged, offsets
