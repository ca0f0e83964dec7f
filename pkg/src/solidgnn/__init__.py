"""Graph neural network surrogates for static 2D solid mechanics.

End-to-end desk-scale pipeline: random Bezier geometries, plane-stress
finite-element ground truth, rotation/translation-invariant coordinate
frames, graph conversion, and two trainable graph-network regressors
(edge-augmented message passing and a multi-resolution hierarchy).
"""

from .coords import FrameTransform, map_output_back, map_vector, to_simulation_coords
from .geometry import (
    BoundarySpec,
    ClosedCurve,
    Material,
    Mesh,
    assign_bcs,
    gen_geometry,
    jitter_nodes,
    triangulate,
)
from .fem import FemSolution, recover_stress, solve_sample
from .graphs import Graph, augment_edges, graph_power, mesh_to_graph, restore, topk_select

__version__ = "0.1.0"

__all__ = [
    "FrameTransform",
    "map_output_back",
    "map_vector",
    "to_simulation_coords",
    "BoundarySpec",
    "ClosedCurve",
    "Material",
    "Mesh",
    "assign_bcs",
    "gen_geometry",
    "jitter_nodes",
    "triangulate",
    "FemSolution",
    "recover_stress",
    "solve_sample",
    "Graph",
    "augment_edges",
    "graph_power",
    "mesh_to_graph",
    "restore",
    "topk_select",
    "__version__",
]
