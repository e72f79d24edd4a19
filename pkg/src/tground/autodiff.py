"""Minimal dense-tensor autodiff.

Reverse-mode differentiation over a flat tape of primitive ops, enough to
express LSTMs, MLPs, softmax heads and distance-based matching.  Values are
numpy arrays; float32 is the training default and float64 is used by the
gradient-check suites (finite-difference tolerances are unreliable at 32-bit).
"""

from __future__ import annotations

import numpy as np

_EPS_DIST = 1e-12  # keeps the distance gradient finite when the operands meet


class Tensor:
    """A node in the computation graph: a numpy array plus backward hooks."""

    __slots__ = ("data", "grad", "parents", "backward_fn")

    def __init__(self, data, parents=(), backward_fn=None):
        self.data = np.asarray(data)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


class Parameter(Tensor):
    """Trainable tensor with a gradient accumulator and a learning-rate multiplier."""

    __slots__ = ("lr_scale", "name")

    def __init__(self, data, name="", lr_scale=1.0):
        super().__init__(np.array(data))
        if lr_scale <= 0:
            raise ValueError(f"lr_scale must be > 0, got {lr_scale}")
        self.lr_scale = lr_scale
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad[...] = 0.0


class Tape:
    """Ordered record of op outputs; creation order is a topological order."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _tape_stack.append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack.pop()
        return False


_tape_stack: list[Tape] = []


def _record(t: Tensor):
    if _tape_stack:
        _tape_stack[-1].nodes.append(t)
    return t


def _shape_err(op, a, b):
    return ValueError(f"{op}: incompatible shapes {np.shape(a)} and {np.shape(b)}")


def _unbroadcast(grad, shape):
    """Reduce grad (from a broadcast result) back to `shape`."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def constant(data, dtype=None):
    return Tensor(np.asarray(data, dtype=dtype))


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out_data = a.data + b.data
    except ValueError:
        raise _shape_err("add", a.data, b.data)

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _record(Tensor(out_data, (a, b), bwd))


def sub(a: Tensor, b: Tensor) -> Tensor:
    try:
        out_data = a.data - b.data
    except ValueError:
        raise _shape_err("sub", a.data, b.data)

    def bwd(g):
        return _unbroadcast(g, a.data.shape), -_unbroadcast(g, b.data.shape)

    return _record(Tensor(out_data, (a, b), bwd))


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out_data = a.data * b.data
    except ValueError:
        raise _shape_err("mul", a.data, b.data)

    def bwd(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _record(Tensor(out_data, (a, b), bwd))


def scale(a: Tensor, c: float) -> Tensor:
    def bwd(g):
        return (g * c,)

    return _record(Tensor(a.data * c, (a,), bwd))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[-1] != b.data.shape[0]:
        raise _shape_err("matmul", a.data, b.data)
    out_data = a.data @ b.data

    def bwd(g):
        return g @ b.data.T, a.data.T @ g

    return _record(Tensor(out_data, (a, b), bwd))


def concat(parts: list[Tensor], axis: int = -1) -> Tensor:
    try:
        out_data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        shapes = [p.data.shape for p in parts]
        raise ValueError(f"concat: incompatible shapes {shapes} along axis {axis}")
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(Tensor(out_data, tuple(parts), bwd))


def sum_(a: Tensor, axis=None) -> Tensor:
    out_data = a.data.sum(axis=axis)

    def bwd(g):
        if axis is None:
            return (np.full_like(a.data, 1.0) * g,)
        return (np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy(),)

    return _record(Tensor(out_data, (a,), bwd))


def mean(a: Tensor, axis=None) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    out_data = a.data.mean(axis=axis)

    def bwd(g):
        if axis is None:
            return (np.full_like(a.data, 1.0 / count) * g,)
        return (np.broadcast_to(np.expand_dims(g, axis), a.data.shape) / count,)

    return _record(Tensor(out_data, (a,), bwd))


def sigmoid(a: Tensor) -> Tensor:
    # numerically stable two-sided form
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                        np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out_data = out_data.astype(x.dtype, copy=False)

    def bwd(g):
        return (g * out_data * (1.0 - out_data),)

    return _record(Tensor(out_data, (a,), bwd))


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def bwd(g):
        return (g * (1.0 - out_data * out_data),)

    return _record(Tensor(out_data, (a,), bwd))


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0.0)

    def bwd(g):
        return (g * (a.data > 0),)

    return _record(Tensor(out_data, (a,), bwd))


def maximum(a: Tensor, c: float) -> Tensor:
    """Elementwise max with a constant; subgradient at equality is 0."""
    out_data = np.maximum(a.data, c)

    def bwd(g):
        return (g * (a.data > c),)

    return _record(Tensor(out_data, (a,), bwd))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        return (out_data * (g - dot),)

    return _record(Tensor(out_data, (a,), bwd))


def l2_normalize(a: Tensor, axis: int = -1) -> Tensor:
    norm = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=True) + _EPS_DIST)
    out_data = a.data / norm

    def bwd(g):
        dot = (g * a.data).sum(axis=axis, keepdims=True)
        return (g / norm - a.data * (dot / norm ** 3),)

    return _record(Tensor(out_data, (a,), bwd))


def euclidean_distance(a: Tensor, b: Tensor) -> Tensor:
    """Distance between two equal-length vectors (scalar output)."""
    if a.data.shape != b.data.shape:
        raise _shape_err("euclidean_distance", a.data, b.data)
    diff = a.data - b.data
    out_data = np.sqrt((diff * diff).sum() + _EPS_DIST)

    def bwd(g):
        ga = g * diff / out_data
        return ga, -ga

    return _record(Tensor(out_data, (a, b), bwd))


def pairwise_distance(a: Tensor, b: Tensor) -> Tensor:
    """All Euclidean distances between rows of a (K,M) and rows of b (S,M) -> (K,S)."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[1]:
        raise _shape_err("pairwise_distance", a.data, b.data)
    diff = a.data[:, None, :] - b.data[None, :, :]
    out_data = np.sqrt((diff * diff).sum(axis=-1) + _EPS_DIST)

    def bwd(g):
        w = (g / out_data)[:, :, None] * diff
        return w.sum(axis=1), -w.sum(axis=0)

    return _record(Tensor(out_data, (a, b), bwd))


def transpose(a: Tensor) -> Tensor:
    def bwd(g):
        return (g.T,)

    return _record(Tensor(a.data.T, (a,), bwd))


def reshape(a: Tensor, shape) -> Tensor:
    def bwd(g):
        return (g.reshape(a.data.shape),)

    return _record(Tensor(a.data.reshape(shape), (a,), bwd))


def take_rows(a: Tensor, indices) -> Tensor:
    """Gather rows of a 2-D tensor; backward scatter-adds (embedding lookup)."""
    idx = np.asarray(indices, dtype=np.intp)
    out_data = a.data[idx]

    def bwd(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return _record(Tensor(out_data, (a,), bwd))


def take(a: Tensor, index: int) -> Tensor:
    """Pick one element of a 1-D tensor as a scalar."""
    flat = a.data.reshape(-1)
    out_data = flat[index].copy()

    def bwd(g):
        ga = np.zeros_like(a.data)
        ga.reshape(-1)[index] = g
        return (ga,)

    return _record(Tensor(out_data, (a,), bwd))


def broadcast_rows(a: Tensor, n: int) -> Tensor:
    """Repeat a (1,M) row n times -> (n,M); backward sums over rows."""
    if a.data.ndim != 2 or a.data.shape[0] != 1:
        raise ValueError(f"broadcast_rows: expected (1,M), got {a.data.shape}")
    out_data = np.broadcast_to(a.data, (n, a.data.shape[1])).copy()

    def bwd(g):
        return (g.sum(axis=0, keepdims=True),)

    return _record(Tensor(out_data, (a,), bwd))


# ---------------------------------------------------------------------------
# backward pass and SGD
# ---------------------------------------------------------------------------

def backward(tape: Tape, loss: Tensor):
    """Populate .grad for every tensor reachable from `loss` on the tape.

    Parameter gradients accumulate into their persistent .grad buffers;
    parameters not on the path keep whatever is there (zeros after zero_grad).
    """
    if loss.data.shape != ():
        raise ValueError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    needed = set()
    stack = [loss]
    while stack:
        t = stack.pop()
        if id(t) in needed:
            continue
        needed.add(id(t))
        stack.extend(t.parents)

    for node in tape.nodes:
        if id(node) in needed and not isinstance(node, Parameter):
            node.grad = None
    loss.grad = np.ones_like(loss.data)

    for node in reversed(tape.nodes):
        if id(node) not in needed or node.grad is None or node.backward_fn is None:
            continue
        grads = node.backward_fn(node.grad)
        for parent, g in zip(node.parents, grads):
            if g is None:
                continue
            if parent.grad is None:
                parent.grad = np.array(g, dtype=parent.data.dtype)
            else:
                parent.grad = parent.grad + g.astype(parent.data.dtype, copy=False)


class SgdConfig:
    """Step-decay SGD schedule."""

    def __init__(self, lr=0.05, decay=0.1, decay_every=33, batch_size=120, max_epochs=100):
        if lr <= 0:
            raise ValueError("lr must be > 0")
        if not (0 < decay <= 1):
            raise ValueError("decay must be in (0, 1]")
        if decay_every < 1:
            raise ValueError("decay_every must be >= 1")
        self.lr = lr
        self.decay = decay
        self.decay_every = decay_every
        self.batch_size = batch_size
        self.max_epochs = max_epochs

    def rate(self, epoch: int) -> float:
        return self.lr * self.decay ** (epoch // self.decay_every)


def sgd_step(params, epoch: int, config: SgdConfig):
    """p <- p - rate(epoch) * lr_scale(p) * grad(p), then zero the grads."""
    rate = config.rate(epoch)
    for p in params:
        p.data -= (rate * p.lr_scale * p.grad).astype(p.data.dtype, copy=False)
        p.zero_grad()


# ---------------------------------------------------------------------------
# initialization and checkpoints
# ---------------------------------------------------------------------------

def init_uniform(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32,
                 name="", lr_scale=1.0) -> Parameter:
    """Seeded uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    data = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return Parameter(data, name=name, lr_scale=lr_scale)


def save_checkpoint(path, params: dict):
    """Write parameters to a .npz archive (name -> array); bit-exact round trip."""
    arrays = {name: (p.data if isinstance(p, Tensor) else np.asarray(p))
              for name, p in params.items()}
    np.savez(path, **arrays)


def load_checkpoint(path) -> dict:
    with np.load(path) as npz:
        return {name: npz[name].copy() for name in npz.files}
