"""Minimal dense-tensor reverse-mode differentiation engine.

Float64 only, at most 3 axes, no broadcasting beyond row-vector bias
addition.  Operations record onto an explicit :class:`Tape`; with no active
tape they evaluate to plain constants, which is the (graph-free) inference
path.  Gradients are accumulated into the ``grad`` buffers of parameter
tensors by :func:`backward`.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeMismatchError",
    "NonScalarLossError",
    "parameter",
    "constant",
    "apply_custom",
    "backward",
    "grad_check",
    "matmul",
    "add",
    "add_bias",
    "hadamard",
    "rowscale",
    "concat",
    "slice_axis",
    "sum_axis",
    "mean_axis",
    "sigmoid",
    "tanh",
    "elu",
    "softmax",
    "layer_norm",
    "glu",
    "dropout",
    "affine",
    "reshape",
    "tile_rows",
]


class ShapeMismatchError(ValueError):
    """Raised when operand shapes are incompatible; message carries both."""


class NonScalarLossError(ValueError):
    """Raised when backward is started from a non-scalar tensor."""


class Tensor:
    """Dense float64 array, optionally attached to a tape node."""

    __slots__ = ("data", "grad", "requires_grad", "node")

    def __init__(self, data, requires_grad: bool = False, node: int | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 3:
            raise ShapeMismatchError(f"at most 3 axes supported, got shape {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.node = node

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, node={self.node}, requires_grad={self.requires_grad})"


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def constant(data) -> Tensor:
    return Tensor(data)


class _Node:
    __slots__ = ("op", "parents", "vjp")

    def __init__(self, op: str, parents: tuple[Tensor, ...], vjp: Callable):
        self.op = op
        self.parents = parents
        self.vjp = vjp


_ACTIVE_TAPE: "Tape | None" = None


class Tape:
    """Append-only record of primitive applications, topological by construction."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("a tape is already recording; tapes do not nest")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def __len__(self):
        return len(self.nodes)


def _tracked(t: Tensor) -> bool:
    return t.requires_grad or t.node is not None


def _record(op: str, out_data: np.ndarray, parents: tuple[Tensor, ...], vjp: Callable) -> Tensor:
    if _ACTIVE_TAPE is None or not any(_tracked(p) for p in parents):
        return Tensor(out_data)
    tape = _ACTIVE_TAPE
    tape.nodes.append(_Node(op, parents, vjp))
    return Tensor(out_data, node=len(tape.nodes) - 1)


def apply_custom(op: str, out_data: np.ndarray, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
    """Record a caller-defined primitive (used by the loss modules)."""
    return _record(op, np.asarray(out_data, dtype=np.float64), tuple(parents), vjp)


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeMismatchError(f"{op}: shape {a.data.shape} vs {b.data.shape}")


# ---------------------------------------------------------------------------
# primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatchError(f"matmul: shape {a.data.shape} vs {b.data.shape}")
    out = a.data @ b.data

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _record("matmul", out, (a, b), vjp)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("add", a, b)
    return _record("add", a.data + b.data, (a, b), lambda g: (g, g))


def add_bias(a: Tensor, bias: Tensor) -> Tensor:
    if bias.data.ndim != 1 or a.data.shape[-1] != bias.data.shape[0]:
        raise ShapeMismatchError(f"add_bias: shape {a.data.shape} vs {bias.data.shape}")
    axes = tuple(range(a.data.ndim - 1))
    return _record("add_bias", a.data + bias.data, (a, bias), lambda g: (g, g.sum(axis=axes)))


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("hadamard", a, b)
    return _record("hadamard", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def rowscale(a: Tensor, s: Tensor) -> Tensor:
    """Scale row i of ``a`` by ``s[i]`` (used for selection-weight mixing)."""
    if a.data.ndim != 2 or s.data.shape != (a.data.shape[0],):
        raise ShapeMismatchError(f"rowscale: shape {a.data.shape} vs {s.data.shape}")
    out = a.data * s.data[:, None]

    def vjp(g):
        return g * s.data[:, None], (g * a.data).sum(axis=1)

    return _record("rowscale", out, (a, s), vjp)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    datas = [t.data for t in tensors]
    widths = [d.shape[axis] for d in datas]
    out = np.concatenate(datas, axis=axis)
    offsets = np.cumsum([0] + widths)

    def vjp(g):
        return tuple(
            np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(datas))
        )

    return _record("concat", out, tuple(tensors), vjp)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    out = a.data[idx].copy()

    def vjp(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _record("slice", out, (a,), vjp)


def sum_axis(a: Tensor, axis: int | None = None) -> Tensor:
    out = a.data.sum(axis=axis)

    def vjp(g):
        if axis is None:
            return (np.full_like(a.data, g),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy(),)

    return _record("sum", out, (a,), vjp)


def mean_axis(a: Tensor, axis: int | None = None) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    out = a.data.mean(axis=axis)

    def vjp(g):
        if axis is None:
            return (np.full_like(a.data, g / n),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.data.shape) / n,)

    return _record("mean", out, (a,), vjp)


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _record("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _record("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def elu(a: Tensor) -> Tensor:
    neg = a.data < 0.0
    out = np.where(neg, np.expm1(a.data), a.data)

    def vjp(g):
        return (g * np.where(neg, out + 1.0, 1.0),)

    return _record("elu", out, (a,), vjp)


def softmax(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeMismatchError(f"softmax: expected 2 axes, got shape {a.data.shape}")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    return _record("softmax", out, (a,), vjp)


_LN_EPS = 1e-5


def layer_norm(a: Tensor, scale: Tensor, shift: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeMismatchError(f"layer_norm: expected 2 axes, got shape {a.data.shape}")
    m = a.data.shape[1]
    if scale.data.shape != (m,) or shift.data.shape != (m,):
        raise ShapeMismatchError(
            f"layer_norm: params {scale.data.shape}/{shift.data.shape} vs input {a.data.shape}"
        )
    mu = a.data.mean(axis=1, keepdims=True)
    xmu = a.data - mu
    ivar = 1.0 / np.sqrt((xmu * xmu).mean(axis=1, keepdims=True) + _LN_EPS)
    xhat = xmu * ivar
    out = xhat * scale.data + shift.data

    def vjp(g):
        dxhat = g * scale.data
        da = (
            ivar / m
            * (m * dxhat - dxhat.sum(axis=1, keepdims=True) - xhat * (dxhat * xhat).sum(axis=1, keepdims=True))
        )
        return da, (g * xhat).sum(axis=0), g.sum(axis=0)

    return _record("layer_norm", out, (a, scale, shift), vjp)


def glu(a: Tensor, b: Tensor) -> Tensor:
    """Gated linear unit ``a * sigmoid(b)``."""
    _check_same_shape("glu", a, b)
    s = 1.0 / (1.0 + np.exp(-b.data))
    out = a.data * s

    def vjp(g):
        return g * s, g * a.data * s * (1.0 - s)

    return _record("glu", out, (a, b), vjp)


def dropout(a: Tensor, p: float, rng: np.random.Generator, train: bool) -> Tensor:
    """Inverted dropout; exactly the identity in eval mode."""
    if not train or p == 0.0:
        return a
    keep = 1.0 - p
    mask = (rng.random(a.data.shape) < keep) / keep
    return _record("dropout", a.data * mask, (a,), lambda g: (g * mask,))


def affine(a: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """``a @ w + b`` with a row-vector bias."""
    if a.data.ndim != 2 or a.data.shape[1] != w.data.shape[0]:
        raise ShapeMismatchError(f"affine: shape {a.data.shape} vs {w.data.shape}")
    if b.data.shape != (w.data.shape[1],):
        raise ShapeMismatchError(f"affine: bias {b.data.shape} vs weight {w.data.shape}")
    out = a.data @ w.data + b.data

    def vjp(g):
        return g @ w.data.T, a.data.T @ g, g.sum(axis=0)

    return _record("affine", out, (a, w, b), vjp)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = a.data.reshape(shape)
    return _record("reshape", out, (a,), lambda g: (g.reshape(a.data.shape),))


def tile_rows(a: Tensor, reps: int) -> Tensor:
    """Stack ``reps`` copies of a 2-D tensor along axis 0."""
    if a.data.ndim != 2:
        raise ShapeMismatchError(f"tile_rows: expected 2 axes, got shape {a.data.shape}")
    n, m = a.data.shape
    out = np.tile(a.data, (reps, 1))

    def vjp(g):
        return (g.reshape(reps, n, m).sum(axis=0),)

    return _record("tile_rows", out, (a,), vjp)


# ---------------------------------------------------------------------------
# reverse pass


def backward(tape: Tape, loss: Tensor, params: Sequence[Tensor] = ()) -> None:
    """Reverse-accumulate d(loss)/d(param) into each parameter's ``grad``.

    Unused parameters receive an explicit zero gradient.  Calling backward
    again on the same tape after a gradient reset reproduces the same grads.
    """
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise NonScalarLossError(f"loss must be scalar, got shape {loss.data.shape}")
    pending: dict[int, np.ndarray] = {}
    if loss.node is not None:
        pending[loss.node] = np.ones_like(loss.data)
    elif loss.requires_grad:
        loss.grad = np.ones_like(loss.data)

    for nid in range(len(tape.nodes) - 1, -1, -1):
        g = pending.pop(nid, None)
        if g is None:
            continue
        node = tape.nodes[nid]
        grads = node.vjp(g)
        for parent, pg in zip(node.parents, grads):
            if pg is None:
                continue
            if parent.node is not None:
                prev = pending.get(parent.node)
                pending[parent.node] = pg if prev is None else prev + pg
            elif parent.requires_grad:
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad = parent.grad + pg

    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.data)


def grad_check(f: Callable[[Tensor], Tensor], x: np.ndarray, eps: float = 1e-6) -> float:
    """Max relative error between reverse-mode and central finite differences.

    ``f`` must be twice continuously differentiable at ``x`` (elu, sigmoid,
    tanh qualify; relu-style kinks are excluded by contract).
    """
    x = np.asarray(x, dtype=np.float64)
    xt = parameter(x.copy())
    tape = Tape()
    with tape:
        loss = f(xt)
    backward(tape, loss, [xt])
    analytic = xt.grad

    numeric = np.zeros_like(x)
    flat = x.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(constant(x)).data)
        flat[i] = orig - eps
        fm = float(f(constant(x)).data)
        flat[i] = orig
        num_flat[i] = (fp - fm) / (2.0 * eps)

    rel = np.abs(numeric - analytic) / (np.abs(analytic) + 1e-8)
    return float(rel.max())
