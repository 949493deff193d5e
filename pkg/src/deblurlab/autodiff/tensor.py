"""Reverse-mode autodiff over NumPy arrays.

Every primitive's VJP is itself expressed with recorded tensor operations,
so differentiating through a backward pass (``grad(..., create_graph=True)``
twice) is exact. That is what the Lipschitz penalty's parameter gradient
relies on.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

_DTYPE = np.float64
_GRAD_ENABLED = True
_DEBUG_CHECKS = False
_node_ids = itertools.count()

Scalar = Union[int, float]
TensorLike = Union["Tensor", np.ndarray, Scalar, list]


def set_default_dtype(dtype) -> None:
    """Switch the engine precision (float64 default; float32 supported)."""
    global _DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}")
    _DTYPE = dtype.type


def default_dtype():
    return _DTYPE


def set_debug_checks(enabled: bool) -> None:
    """Toggle NaN/Inf screening of every op output (slow, for tests)."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


@contextmanager
def no_grad():
    """Suspend taping; ops executed inside produce constant tensors."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class TapeNode:
    """One recorded primitive: the op name, its inputs, and its VJP."""

    __slots__ = ("op", "parents", "vjp", "id")

    def __init__(self, op: str, parents: tuple, vjp: Callable):
        self.op = op
        self.parents = parents
        self.vjp = vjp
        self.id = next(_node_ids)


class Tensor:
    """N-d array plus an optional reference into the differentiation tape."""

    __slots__ = ("data", "requires_grad", "node")

    def __init__(self, data: TensorLike, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=_DTYPE)
        self.requires_grad = bool(requires_grad)
        self.node: Optional[TapeNode] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self._item_err()

    def _item_err(self):
        raise ValueError(f"item() on tensor of size {self.data.size}")

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        grad_tag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{grad_tag})"

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __truediv__(self, other):
        return mul(self, power(_wrap(other), -1.0))

    def __rtruediv__(self, other):
        return mul(_wrap(other), power(self, -1.0))

    def __pow__(self, p: Scalar):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    # -- method sugar ------------------------------------------------------
    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def sqrt(self):
        return power(self, 0.5)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)


def _wrap(x: TensorLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def tensor(data: TensorLike, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=_DTYPE), requires_grad=requires_grad)


def ones(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape, dtype=_DTYPE), requires_grad=requires_grad)


def zeros_like(t: Tensor) -> Tensor:
    return Tensor(np.zeros_like(t.data))


def ones_like(t: Tensor) -> Tensor:
    return Tensor(np.ones_like(t.data))


def record(op: str, data: np.ndarray, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
    """Wrap an op result, attaching a tape node when tracking applies."""
    if _DEBUG_CHECKS and not np.isfinite(data).all():
        raise FloatingPointError(f"non-finite values produced by op {op!r}")
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.node = TapeNode(op, tuple(parents), vjp)
    return out


# -- primitives -------------------------------------------------------------


def _sum_to(g: Tensor, shape: tuple) -> Tensor:
    """Reduce a broadcast gradient back to ``shape`` (differentiably)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = tensor_sum(g, axis=tuple(range(extra)))
    collapse = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if collapse:
        g = tensor_sum(g, axis=collapse, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    return record(
        "add",
        a.data + b.data,
        (a, b),
        lambda g: (_sum_to(g, a.shape), _sum_to(g, b.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    return record(
        "mul",
        a.data * b.data,
        (a, b),
        lambda g: (_sum_to(mul(g, b), a.shape), _sum_to(mul(g, a), b.shape)),
    )


def neg(a: Tensor) -> Tensor:
    return record("neg", -a.data, (a,), lambda g: (neg(g),))


def power(a: Tensor, p: Scalar) -> Tensor:
    p = float(p)
    return record(
        "power",
        a.data**p,
        (a,),
        lambda g: (mul(g, mul(Tensor(np.asarray(p, dtype=_DTYPE)), power(a, p - 1.0))),),
    )


def exp(a: Tensor) -> Tensor:
    out = record("exp", np.exp(a.data), (a,), lambda g: (mul(g, out),))
    return out


def log(a: Tensor) -> Tensor:
    return record("log", np.log(a.data), (a,), lambda g: (mul(g, power(a, -1.0)),))


def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        axes = tuple(range(a.ndim))
    elif isinstance(axis, int):
        axes = (axis,)
    else:
        axes = tuple(axis)

    def vjp(g: Tensor):
        kept = g
        if not keepdims:
            shape = list(a.shape)
            for ax in axes:
                shape[ax] = 1
            kept = reshape(g, tuple(shape))
        return (broadcast_to(kept, a.shape),)

    return record("sum", a.data.sum(axis=axes, keepdims=keepdims), (a,), vjp)


def tensor_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(tensor_sum(a, axis=axis, keepdims=keepdims), Tensor(np.asarray(1.0 / count, dtype=_DTYPE)))


def broadcast_to(a: Tensor, shape: tuple) -> Tensor:
    return record(
        "broadcast_to",
        np.broadcast_to(a.data, shape).copy(),
        (a,),
        lambda g: (_sum_to(g, a.shape),),
    )


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    return record(
        "reshape",
        a.data.reshape(shape),
        (a,),
        lambda g: (reshape(g, a.shape),),
    )


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return record(
        "transpose",
        np.ascontiguousarray(a.data.transpose(axes)),
        (a,),
        lambda g: (transpose(g, inverse),),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    return record(
        "matmul",
        a.data @ b.data,
        (a, b),
        lambda g: (matmul(g, transpose(b, (1, 0))), matmul(transpose(a, (1, 0)), g)),
    )


def sigmoid(a: Tensor) -> Tensor:
    return power(add(Tensor(np.asarray(1.0, dtype=_DTYPE)), exp(neg(a))), -1.0)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    """Differentiable clipping: unit slope inside [lo, hi], zero outside."""
    inside = (a.data >= lo) & (a.data <= hi)
    offset = np.where(a.data < lo, lo, 0.0) + np.where(a.data > hi, hi, 0.0)
    return add(mul(a, Tensor(inside.astype(_DTYPE))), Tensor(offset.astype(_DTYPE)))


# -- backward engine ---------------------------------------------------------


def topo_order(root: Tensor) -> list:
    """Recorded tensors reachable from ``root``, inputs before consumers."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if t.node is None:
            continue
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        for p in t.node.parents:
            if p.node is not None and id(p) not in seen:
                stack.append((p, False))
    return order


def grad(
    output: Tensor,
    inputs: Sequence[Tensor],
    grad_output: Optional[Tensor] = None,
    create_graph: bool = False,
) -> list:
    """Gradients of ``output`` w.r.t. ``inputs``.

    Inputs that ``output`` does not depend on get zero gradients. With
    ``create_graph=True`` the returned tensors are themselves recorded, so
    they can be differentiated again.
    """
    seed = grad_output if grad_output is not None else ones_like(output)
    if seed.shape != output.shape:
        raise ValueError(f"grad_output shape {seed.shape} != output shape {output.shape}")
    wanted = {id(t) for t in inputs}
    grads: dict[int, Tensor] = {id(output): seed}
    results: dict[int, Tensor] = {}
    if id(output) in wanted:
        results[id(output)] = seed

    order = topo_order(output)
    ctx = no_grad() if not create_graph else _nullcontext()
    with ctx:
        for t in reversed(order):
            g = grads.pop(id(t), None)
            if g is None:
                continue
            parent_grads = t.node.vjp(g)
            for p, pg in zip(t.node.parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                acc = grads.get(id(p))
                total = pg if acc is None else add(acc, pg)
                grads[id(p)] = total
                if id(p) in wanted:
                    results[id(p)] = total
    return [results.get(id(t), zeros_like(t)) for t in inputs]


@contextmanager
def _nullcontext():
    yield


def backward(loss: Tensor, create_graph: bool = False) -> dict:
    """Gradient map {leaf tensor -> gradient} for a scalar loss."""
    if loss.size != 1:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.shape}")
    leaves: list[Tensor] = []
    seen: set[int] = set()
    stack = [loss]
    while stack:
        t = stack.pop()
        if id(t) in seen:
            continue
        seen.add(id(t))
        if t.node is None:
            if t.requires_grad:
                leaves.append(t)
            continue
        stack.extend(t.node.parents)
    gs = grad(loss, leaves, create_graph=create_graph)
    return dict(zip(leaves, gs))
