"""Plane-stress linear-elastic finite elements on constant-strain triangles.

Ground truth for training data: assembles the CST stiffness system for a
mesh with mixed Dirichlet/Neumann conditions and an optional body-force
disk, solves it with Jacobi-preconditioned conjugate gradients, and
recovers nodal stresses by area-weighted averaging of element stresses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .geometry import BC_DIRICHLET_HOM, BC_DIRICHLET_NONHOM, BoundarySpec, Material, Mesh

__all__ = [
    "FemSolution",
    "SparseSystem",
    "SingularSystemError",
    "SolverConvergenceError",
    "elastic_matrix",
    "assemble",
    "assemble_dofs",
    "solve",
    "recover_stress",
    "solve_sample",
    "reaction_forces",
]

CG_TOL = 1e-12
CG_MAX_ITER_FACTOR = 20


class SingularSystemError(RuntimeError):
    """Raised when no Dirichlet constraint removes the rigid-body modes."""


class SolverConvergenceError(RuntimeError):
    """Raised when conjugate gradients fail to reach the residual target."""


@dataclass
class FemSolution:
    """Nodal displacements (n, 2) and recovered Voigt stresses (n, 3)."""

    displacement: np.ndarray
    stress: np.ndarray


@dataclass
class SparseSystem:
    """Assembled symmetric stiffness system with constraint metadata.

    ``matrix`` is the full (2n x 2n) stiffness in CSR form, ``rhs`` the
    applied load vector; ``fixed_dofs``/``fixed_values`` describe the
    Dirichlet constraints eliminated at solve time.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    fixed_dofs: np.ndarray
    fixed_values: np.ndarray

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


def elastic_matrix(material: Material) -> np.ndarray:
    """Plane-stress constitutive matrix D(E, nu)."""
    e, nu = material.youngs_modulus, material.poisson_ratio
    return (
        e
        / (1.0 - nu * nu)
        * np.array([[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, (1.0 - nu) / 2.0]])
    )


def _strain_operators(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Per-element strain-displacement matrices B (m, 3, 6) and areas (m,)."""
    p = mesh.nodes[mesh.triangles]  # (m, 3, 2)
    x, y = p[..., 0], p[..., 1]
    b = np.stack(
        [y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1
    )
    c = np.stack(
        [x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1
    )
    area = 0.5 * (
        (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0])
        - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    )
    m = len(area)
    bmat = np.zeros((m, 3, 6))
    inv2a = 1.0 / (2.0 * area)
    for i in range(3):
        bmat[:, 0, 2 * i] = b[:, i] * inv2a
        bmat[:, 1, 2 * i + 1] = c[:, i] * inv2a
        bmat[:, 2, 2 * i] = c[:, i] * inv2a
        bmat[:, 2, 2 * i + 1] = b[:, i] * inv2a
    return bmat, area


def _stiffness_coo(mesh: Mesh, material: Material) -> sp.coo_matrix:
    d = elastic_matrix(material)
    bmat, area = _strain_operators(mesh)
    ke = np.einsum("mia,ij,mjb,m->mab", bmat, d, bmat, area)
    dofs = np.empty((len(area), 6), dtype=np.int64)
    dofs[:, 0::2] = 2 * mesh.triangles
    dofs[:, 1::2] = 2 * mesh.triangles + 1
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    n_dof = 2 * mesh.n_nodes
    return sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n_dof, n_dof))


def _traction_loads(mesh: Mesh, tractions: np.ndarray) -> np.ndarray:
    """Two-node lumped integration of per-node boundary tractions.

    A boundary edge carries traction only when both endpoints do, so a
    loaded arc ends exactly at its end nodes instead of spilling half an
    edge beyond them.
    """
    f = np.zeros(2 * mesh.n_nodes)
    active = np.any(tractions != 0.0, axis=1)
    cyc = mesh.boundary_nodes
    nxt = np.roll(cyc, -1)
    lengths = np.linalg.norm(mesh.nodes[nxt] - mesh.nodes[cyc], axis=1)
    for a, b, ell in zip(cyc, nxt, lengths):
        if active[a] and active[b]:
            f[2 * a : 2 * a + 2] += 0.5 * ell * tractions[a]
            f[2 * b : 2 * b + 2] += 0.5 * ell * tractions[b]
    return f


def _body_loads(mesh: Mesh, spec: BoundarySpec) -> np.ndarray:
    """One-point quadrature of the body-force disk over covered triangles."""
    f = np.zeros(2 * mesh.n_nodes)
    bf = spec.body_force
    if bf is None:
        return f
    p = mesh.nodes[mesh.triangles]
    centroids = p.mean(axis=1)
    areas = 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    )
    covered = np.linalg.norm(centroids - bf.center, axis=1) <= bf.radius
    for tri, area in zip(mesh.triangles[covered], areas[covered]):
        share = area / 3.0 * bf.density
        for node in tri:
            f[2 * node : 2 * node + 2] += share
    return f


def assemble_dofs(
    mesh: Mesh,
    material: Material,
    fixed_dofs,
    fixed_values,
    nodal_tractions: Optional[np.ndarray] = None,
    spec_for_body: Optional[BoundarySpec] = None,
) -> SparseSystem:
    """Assemble with explicit per-DOF Dirichlet constraints.

    ``fixed_dofs`` index into the interleaved (ux0, uy0, ux1, ...) DOF
    vector. This is the low-level interface; ``assemble`` adapts a
    BoundarySpec onto it.
    """
    fixed_dofs = np.asarray(fixed_dofs, dtype=np.int64)
    fixed_values = np.asarray(fixed_values, dtype=np.float64)
    if len(fixed_dofs) == 0:
        raise SingularSystemError(
            "no Dirichlet constraint given; rigid-body modes make the "
            "system singular"
        )
    k = _stiffness_coo(mesh, material).tocsr()
    f = np.zeros(2 * mesh.n_nodes)
    if nodal_tractions is not None:
        f += _traction_loads(mesh, np.asarray(nodal_tractions, dtype=np.float64))
    if spec_for_body is not None:
        f += _body_loads(mesh, spec_for_body)
    return SparseSystem(k, f, fixed_dofs, fixed_values)


def assemble(mesh: Mesh, material: Material, bcs: BoundarySpec) -> SparseSystem:
    """Assemble the stiffness system for a BoundarySpec."""
    fixed_dofs = []
    fixed_values = []
    tractions = np.zeros((mesh.n_nodes, 2))
    for node, kind in enumerate(bcs.kinds):
        if kind in (BC_DIRICHLET_HOM, BC_DIRICHLET_NONHOM):
            fixed_dofs.extend([2 * node, 2 * node + 1])
            fixed_values.extend(bcs.vectors[node])
        elif kind == "neumann":
            tractions[node] = bcs.vectors[node]
    if not fixed_dofs:
        raise SingularSystemError(
            "boundary spec has no Dirichlet nodes; add a displacement "
            "constraint to remove rigid-body modes"
        )
    return assemble_dofs(
        mesh, material, fixed_dofs, fixed_values, tractions, spec_for_body=bcs
    )


def _pcg(a: sp.csr_matrix, b: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradients."""
    diag = a.diagonal()
    inv_diag = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)
    x = np.zeros_like(b)
    r = b.copy()
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return x
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    for _ in range(max_iter):
        if np.linalg.norm(r) <= tol * b_norm:
            return x
        ap = a @ p
        alpha = rz / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = np.linalg.norm(a @ x - b) / b_norm
    if res <= 1e-10:
        return x
    raise SolverConvergenceError(
        f"CG stalled at relative residual {res:.3e} after {max_iter} iterations"
    )


def solve(system: SparseSystem) -> np.ndarray:
    """Solve for the full displacement vector (Dirichlet values included).

    The constrained rows/columns are eliminated (with right-hand-side
    correction) and the reduced SPD system solved by CG to a relative
    residual below 1e-12 (guaranteed < 1e-10).
    """
    n = system.dimension
    u = np.zeros(n)
    u[system.fixed_dofs] = system.fixed_values
    free = np.setdiff1d(np.arange(n), system.fixed_dofs)
    if len(free) == 0:
        return u
    k = system.matrix
    rhs = system.rhs[free] - k[np.ix_(free, system.fixed_dofs)] @ system.fixed_values
    k_ff = k[np.ix_(free, free)].tocsr()
    u[free] = _pcg(k_ff, rhs, CG_TOL, CG_MAX_ITER_FACTOR * n)
    return u


def recover_stress(mesh: Mesh, displacement, material: Material) -> np.ndarray:
    """Area-weighted nodal average of constant element stresses."""
    u = np.asarray(displacement, dtype=np.float64).reshape(-1)
    if len(u) != 2 * mesh.n_nodes:
        raise ValueError("displacement length must be 2 x node count")
    d = elastic_matrix(material)
    bmat, area = _strain_operators(mesh)
    dofs = np.empty((len(area), 6), dtype=np.int64)
    dofs[:, 0::2] = 2 * mesh.triangles
    dofs[:, 1::2] = 2 * mesh.triangles + 1
    ue = u[dofs]  # (m, 6)
    sigma = np.einsum("ij,mjk,mk->mi", d, bmat, ue)  # (m, 3)
    nodal = np.zeros((mesh.n_nodes, 3))
    weight = np.zeros(mesh.n_nodes)
    for e in range(len(area)):
        for node in mesh.triangles[e]:
            nodal[node] += area[e] * sigma[e]
            weight[node] += area[e]
    return nodal / weight[:, None]


def reaction_forces(system: SparseSystem, displacement: np.ndarray) -> np.ndarray:
    """Reaction force at each constrained DOF: (K u - f) restricted there."""
    residual = system.matrix @ displacement - system.rhs
    return residual[system.fixed_dofs]


def solve_sample(mesh: Mesh, material: Material, bcs: BoundarySpec) -> FemSolution:
    """End-to-end assemble/solve/recover for one sample."""
    system = assemble(mesh, material, bcs)
    u = solve(system)
    # Dirichlet values are exact by construction of the elimination
    stress = recover_stress(mesh, u, material)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(stress))):
        raise SolverConvergenceError("non-finite values in FEM solution")
    return FemSolution(u.reshape(-1, 2), stress)
