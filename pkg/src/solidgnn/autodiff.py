"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Supports exactly the operator set the graph networks need: dense affine
maps, ReLU/sigmoid/tanh, sum/mean reductions, row gather/scatter for
message passing, column concatenation, and a handful of scalar helpers.
Includes MLP parameter containers, Adam with decoupled weight decay, and
a cosine-annealing learning-rate schedule with warm restarts.

Gradients only flow where needed: tensors created as data are constants,
tensors registered in a ParamStore are differentiable, and every derived
tensor tracks whether any parameter feeds it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Tensor",
    "RowIndex",
    "SparseMatrix",
    "ParamStore",
    "Mlp",
    "MlpSpec",
    "LrSchedule",
    "TapeConsumedError",
    "backward",
    "constant",
    "add",
    "add_n",
    "sub",
    "mul",
    "matmul",
    "affine",
    "neg",
    "relu",
    "sigmoid",
    "tanh",
    "abs_",
    "sqrt_",
    "reciprocal",
    "sum_all",
    "mean_all",
    "gather_rows",
    "scatter_sum",
    "row_assign",
    "concat_cols",
    "spmm",
    "dropout",
    "mlp_forward",
    "layer_norm",
    "adam_step",
    "cosine_warm_restart_lr",
    "glorot_uniform",
]

_CONSUMED = "consumed"


class TapeConsumedError(RuntimeError):
    """Raised when backward() reuses a previously consumed graph."""


class Tensor:
    """A value in the computation graph. Leaves hold parameters or data;
    interior nodes remember how to push gradients to their parents."""

    __slots__ = ("values", "grad", "needs_grad", "_parents", "_vjp")

    def __init__(self, values, _parents=(), _vjp=None, needs_grad=None):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = None
        self._parents = _parents
        self._vjp = _vjp
        if needs_grad is None:
            needs_grad = any(p.needs_grad for p in _parents)
        self.needs_grad = needs_grad

    @property
    def shape(self):
        return self.values.shape

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, needs_grad={self.needs_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)


def constant(values) -> Tensor:
    return Tensor(values)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(output: Tensor, output_grad=None) -> None:
    """Accumulate gradients of ``output`` into every differentiable leaf.

    Leaf gradients add onto any existing ``.grad`` (callers zero them
    between steps). Reusing a consumed graph raises TapeConsumedError.
    """
    if output._vjp == _CONSUMED:
        raise TapeConsumedError("backward() already consumed this output")
    if output_grad is None:
        if output.values.shape != ():
            raise ValueError("output_grad required for non-scalar outputs")
        output_grad = np.float64(1.0)
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        if node._vjp == _CONSUMED:
            raise TapeConsumedError("graph reaches a node consumed by a prior backward()")
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.needs_grad and id(parent) not in seen:
                stack.append((parent, False))
    grads: dict[int, np.ndarray] = {id(output): np.asarray(output_grad, dtype=np.float64)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._vjp is None:
            # differentiable leaf: accumulate into persistent grad
            if node.grad is None:
                node.grad = g.copy()
            else:
                node.grad += g
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if pg is None or not parent.needs_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] += pg
            else:
                grads[key] = pg
        # release activations promptly and poison the node against reuse
        node._parents = ()
        node._vjp = _CONSUMED


# ---------------------------------------------------------------------------
# Primitive operations
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return Tensor(
        a.values + b.values,
        (a, b),
        lambda g: (_unbroadcast(g, a.values.shape), _unbroadcast(g, b.values.shape)),
    )


def add_n(*tensors) -> Tensor:
    """Sum of same-shaped tensors in one node."""
    ts = [_as_tensor(t) for t in tensors]
    out = ts[0].values.copy()
    for t in ts[1:]:
        out += t.values
    return Tensor(out, tuple(ts), lambda g: tuple(g for _ in ts))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return Tensor(
        a.values - b.values,
        (a, b),
        lambda g: (_unbroadcast(g, a.values.shape), _unbroadcast(-g, b.values.shape)),
    )


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return Tensor(-a.values, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    av, bv = a.values, b.values

    def vjp(g):
        return (
            _unbroadcast(g * bv, av.shape) if a.needs_grad else None,
            _unbroadcast(g * av, bv.shape) if b.needs_grad else None,
        )

    return Tensor(av * bv, (a, b), vjp)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    av, bv = a.values, b.values

    def vjp(g):
        return (
            g @ bv.T if a.needs_grad else None,
            av.T @ g if b.needs_grad else None,
        )

    return Tensor(av @ bv, (a, b), vjp)


def affine(x, w, b, extra=()) -> Tensor:
    """Fused x @ w + b (+ optional same-shaped extra terms), in one node."""
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    extra = tuple(_as_tensor(t) for t in extra)
    out = x.values @ w.values
    out += b.values
    for t in extra:
        out += t.values

    def vjp(g):
        head = (
            g @ w.values.T if x.needs_grad else None,
            x.values.T @ g if w.needs_grad else None,
            _unbroadcast(g, b.values.shape) if b.needs_grad else None,
        )
        return head + tuple(g for _ in extra)

    return Tensor(out, (x, w, b) + extra, vjp)


def layer_norm(x, gamma, beta, eps: float = 1e-8) -> Tensor:
    """Per-row standardization followed by a learned affine map."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    xv = x.values
    mu = xv.mean(axis=1, keepdims=True)
    centered = xv - mu
    sigma = np.sqrt(np.mean(centered * centered, axis=1, keepdims=True) + eps)
    xhat = centered / sigma
    out = xhat * gamma.values + beta.values

    def vjp(g):
        dxhat = g * gamma.values
        n = xv.shape[1]
        dx = (
            dxhat
            - dxhat.mean(axis=1, keepdims=True)
            - xhat * np.mean(dxhat * xhat, axis=1, keepdims=True)
        ) / sigma
        return (
            dx if x.needs_grad else None,
            (g * xhat).sum(axis=0) if gamma.needs_grad else None,
            g.sum(axis=0) if beta.needs_grad else None,
        )

    return Tensor(out, (x, gamma, beta), vjp)


def relu(a) -> Tensor:
    a = _as_tensor(a)
    out = np.maximum(a.values, 0.0)
    return Tensor(out, (a,), lambda g: (g * (out > 0.0),))


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.values))
    return Tensor(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.values)
    return Tensor(out, (a,), lambda g: (g * (1.0 - out * out),))


def abs_(a) -> Tensor:
    a = _as_tensor(a)
    sign = np.sign(a.values)
    return Tensor(np.abs(a.values), (a,), lambda g: (g * sign,))


def sqrt_(a) -> Tensor:
    a = _as_tensor(a)
    out = np.sqrt(a.values)
    return Tensor(out, (a,), lambda g: (g * 0.5 / out,))


def reciprocal(a) -> Tensor:
    a = _as_tensor(a)
    out = 1.0 / a.values
    return Tensor(out, (a,), lambda g: (-g * out * out,))


def sum_all(a) -> Tensor:
    a = _as_tensor(a)
    shape = a.values.shape
    return Tensor(
        np.float64(a.values.sum()), (a,), lambda g: (np.broadcast_to(g, shape).copy(),)
    )


def mean_all(a) -> Tensor:
    a = _as_tensor(a)
    shape = a.values.shape
    size = a.values.size
    return Tensor(
        np.float64(a.values.mean()),
        (a,),
        lambda g: (np.broadcast_to(g / size, shape).copy(),),
    )


class RowIndex:
    """Row index with precomputed sort structure for fast scatter-adds."""

    def __init__(self, idx, n_rows: int):
        self.idx = np.asarray(idx, dtype=np.int64)
        self.n_rows = int(n_rows)
        self.perm = np.argsort(self.idx, kind="stable")
        sorted_idx = self.idx[self.perm]
        if len(sorted_idx):
            self.targets, self.starts = np.unique(sorted_idx, return_index=True)
        else:
            self.targets = np.zeros(0, dtype=np.int64)
            self.starts = np.zeros(0, dtype=np.int64)
        self.counts = np.bincount(self.idx, minlength=self.n_rows).astype(np.float64)

    def scatter_sum_values(self, rows: np.ndarray) -> np.ndarray:
        out = np.zeros((self.n_rows,) + rows.shape[1:])
        if len(self.idx):
            seg = np.add.reduceat(rows[self.perm], self.starts, axis=0)
            out[self.targets] = seg
        return out


def gather_rows(x, index: RowIndex) -> Tensor:
    """out[i] = x[index.idx[i]]; gradient scatters back."""
    x = _as_tensor(x)
    return Tensor(
        np.take(x.values, index.idx, axis=0),
        (x,),
        lambda g: (index.scatter_sum_values(g),),
    )


def scatter_sum(x, index: RowIndex) -> Tensor:
    """out[j] = sum of x rows i with index.idx[i] == j; shape (n_rows, F)."""
    x = _as_tensor(x)
    return Tensor(
        index.scatter_sum_values(x.values),
        (x,),
        lambda g: (np.take(g, index.idx, axis=0),),
    )


def row_assign(base, idx, rows) -> Tensor:
    """Copy of ``base`` with rows at (unique) ``idx`` replaced by ``rows``."""
    base, rows = _as_tensor(base), _as_tensor(rows)
    idx = np.asarray(idx, dtype=np.int64)
    out = base.values.copy()
    out[idx] = rows.values

    def vjp(g):
        g_base = g.copy()
        g_base[idx] = 0.0
        return g_base, g[idx].copy()

    return Tensor(out, (base, rows), vjp)


def concat_cols(tensors) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    widths = [t.values.shape[1] for t in ts]
    splits = np.cumsum(widths)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(part) for part in np.split(g, splits, axis=1))

    return Tensor(np.concatenate([t.values for t in ts], axis=1), tuple(ts), vjp)


class SparseMatrix:
    """Constant sparse matrix usable inside the graph (e.g. mean-aggregation)."""

    def __init__(self, csr):
        self.mat = csr.tocsr()
        self.mat_t = csr.T.tocsr()


def spmm(a: SparseMatrix, x) -> Tensor:
    x = _as_tensor(x)
    return Tensor(a.mat @ x.values, (x,), lambda g: (a.mat_t @ g,))


def dropout(x, rate: float, training: bool, seed: int) -> Tensor:
    """Inverted dropout: scales survivors by 1/(1-rate) while training."""
    if not (0.0 <= rate < 1.0):
        raise ValueError("dropout rate must lie in [0, 1)")
    x = _as_tensor(x)
    if not training or rate == 0.0:
        return x
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    mask = (rng.random(x.values.shape) >= rate) / (1.0 - rate)
    return mul(x, Tensor(mask))


# ---------------------------------------------------------------------------
# Parameters and modules
# ---------------------------------------------------------------------------

def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)


class ParamStore:
    """Named trainable tensors with paired Adam moment buffers."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self.adam_m: dict[str, np.ndarray] = {}
        self.adam_v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, values) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(values, dtype=np.float64), needs_grad=True)
        self._params[name] = t
        self.adam_m[name] = np.zeros_like(t.values)
        self.adam_v[name] = np.zeros_like(t.values)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params)

    def n_params(self) -> int:
        return sum(t.values.size for t in self._params.values())

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.values for name, t in self._params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, t in self._params.items():
            src = np.asarray(arrays[name], dtype=np.float64)
            if src.shape != t.values.shape:
                raise ValueError(f"shape mismatch for parameter {name!r}")
            t.values = src.copy()


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths of an affine/ReLU chain; identity on the last layer."""

    widths: tuple[int, ...]

    def __post_init__(self):
        if len(self.widths) < 2 or any(w < 1 for w in self.widths):
            raise ValueError("MlpSpec needs >= 2 positive widths")


class Mlp:
    """Affine-ReLU chain with parameters registered in a ParamStore."""

    def __init__(self, spec: MlpSpec, store: ParamStore, name: str, rng: np.random.Generator):
        self.spec = spec
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        widths = spec.widths
        for layer, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            w = store.add(
                f"{name}.w{layer}", glorot_uniform(rng, fan_in, fan_out, (fan_in, fan_out))
            )
            b = store.add(f"{name}.b{layer}", np.zeros(fan_out))
            self.weights.append(w)
            self.biases.append(b)

    def __call__(self, x: Tensor) -> Tensor:
        last = len(self.weights) - 1
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = affine(x, w, b)
            if layer != last:
                x = relu(x)
        return x


def mlp_forward(mlp: Mlp, x) -> Tensor:
    """Functional alias for Mlp.__call__; the returned Tensor carries the
    recorded tape for backward()."""
    return mlp(_as_tensor(x))


# ---------------------------------------------------------------------------
# Optimization
# ---------------------------------------------------------------------------

def adam_step(
    store: ParamStore,
    lr: float,
    weight_decay: float = 0.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One Adam update with decoupled weight decay and bias correction."""
    store.step_count += 1
    t = store.step_count
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, p in store.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.values)
        m = store.adam_m[name]
        v = store.adam_v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        if weight_decay:
            p.values -= lr * weight_decay * p.values
        p.values -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


@dataclass(frozen=True)
class LrSchedule:
    """Cosine annealing with warm restarts; period grows by ``mult``."""

    lr_min: float
    lr_max: float
    period: int
    mult: int = 2

    def __post_init__(self):
        if not (0.0 < self.lr_min <= self.lr_max):
            raise ValueError("need 0 < lr_min <= lr_max")
        if self.period < 1 or self.mult < 1:
            raise ValueError("period and mult must be >= 1")


def cosine_warm_restart_lr(schedule: LrSchedule, step: int) -> float:
    if step < 0:
        raise ValueError("step must be >= 0")
    t = step
    period = schedule.period
    while t >= period:
        t -= period
        period *= schedule.mult
    lo, hi = schedule.lr_min, schedule.lr_max
    return float(lo + 0.5 * (hi - lo) * (1.0 + np.cos(np.pi * t / period)))
