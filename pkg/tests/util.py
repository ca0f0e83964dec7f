"""Shared helpers for the test suite: structured meshes, a reference
pipeline sample, and a finite-difference gradient checker."""

import numpy as np

from solidgnn import autodiff as ad
from solidgnn.geometry import Mesh


def unit_square_mesh(k: int) -> Mesh:
    """Structured triangulation of [0,1]^2 with k x k vertices."""
    xs = np.linspace(0.0, 1.0, k)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    nodes = np.column_stack([gx.ravel(), gy.ravel()])

    def nid(i, j):
        return i * k + j

    tris = []
    for i in range(k - 1):
        for j in range(k - 1):
            a, b, c, d = nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)
            tris.append([a, b, c])
            tris.append([a, c, d])
    boundary = (
        [nid(i, 0) for i in range(k - 1)]
        + [nid(k - 1, j) for j in range(k - 1)]
        + [nid(i, k - 1) for i in range(k - 1, 0, -1)]
        + [nid(0, j) for j in range(k - 1, 0, -1)]
    )
    h = 1.0 / (k - 1)
    return Mesh(nodes, np.asarray(tris), np.asarray(boundary), h)


def pipeline_sample(seed=3, h=0.35):
    """One full data-pipeline sample (mesh, bcs, material, fem solution)."""
    from solidgnn.fem import solve_sample
    from solidgnn.geometry import Material, assign_bcs, gen_geometry, triangulate

    curve = gen_geometry(seed, n_ctrl=8, radius_range=(0.75, 1.25))
    mesh = triangulate(curve, h)
    bcs = assign_bcs(mesh, seed + 1)
    material = Material()
    solution = solve_sample(mesh, material, bcs)
    return mesh, bcs, material, solution


def finite_diff_check(loss_fn, store, rng, n_samples=200, step=1e-6, floor=1e-4):
    """Compare backward() gradients against central finite differences on
    randomly chosen parameter entries. Returns the max relative error.

    ``loss_fn`` must rebuild the computation graph on every call and
    return the scalar loss Tensor. The relative-error denominator is
    floored: with an O(1) loss and step 1e-6, central differences carry
    an absolute noise floor around 1e-10, so gradients far below
    ``floor`` cannot be resolved to a meaningful relative precision.
    """
    store.zero_grads()
    loss = loss_fn()
    ad.backward(loss)
    grads = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.values))
             for name, t in store.items()}
    names = store.names()
    sizes = np.array([store[name].values.size for name in names])
    probs = sizes / sizes.sum()
    worst = 0.0
    for _ in range(n_samples):
        name = names[rng.choice(len(names), p=probs)]
        t = store[name]
        flat = t.values.reshape(-1)
        idx = int(rng.integers(flat.size))
        orig = flat[idx]
        flat[idx] = orig + step
        up = float(loss_fn().values)
        flat[idx] = orig - step
        down = float(loss_fn().values)
        flat[idx] = orig
        fd = (up - down) / (2.0 * step)
        bw = grads[name].reshape(-1)[idx]
        denom = max(abs(fd), abs(bw), floor)
        worst = max(worst, abs(fd - bw) / denom)
    return worst
