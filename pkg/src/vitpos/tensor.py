"""Minimal dense tensor engine with define-by-run reverse-mode autodiff.

Every op computes its value eagerly with numpy (float64) and, when a
:class:`GradTape` is active and at least one input requires a gradient,
appends a node holding the inputs and a backward rule.  :func:`backward`
replays the tape in reverse and returns a fresh gradient map, so several
losses recorded on the same tape never contaminate each other.

Leading batch dimensions are accepted everywhere for speed; the only
implicit broadcasting is :func:`add_bias` (trailing-shape bias) and a 2-D
right operand in :func:`matmul`.
"""
from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "ContractError",
    "Tensor",
    "GradTape",
    "backward",
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "add_bias",
    "reshape",
    "transpose",
    "softmax_rows",
    "layer_norm",
    "gelu",
    "mean",
    "total",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(ValueError):
    """A caller violated an op precondition."""


class Tensor:
    """Dense float64 array that can take part in gradient recording."""

    __slots__ = ("data", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other: Tensor) -> Tensor:
        return add(self, other)

    def __sub__(self, other: Tensor) -> Tensor:
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)


class _Node:
    __slots__ = ("out", "inputs", "rule")

    def __init__(self, out: Tensor, inputs: tuple[Tensor, ...], rule: Callable):
        self.out = out
        self.inputs = inputs
        self.rule = rule


_ACTIVE: list["GradTape"] = []


class GradTape:
    """Ordered record of differentiable ops.

    Use as a context manager; ops executed inside the ``with`` block are
    recorded.  Tapes nest, the innermost one receives the nodes.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> GradTape:
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(value: np.ndarray, inputs: tuple[Tensor, ...], rule: Callable) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = value
    out.requires_grad = needs
    out.name = None
    if needs and _ACTIVE:
        _ACTIVE[-1].nodes.append(_Node(out, inputs, rule))
    return out


def backward(
    tape: GradTape, loss: Tensor, wrt: Iterable[Tensor] | None = None
) -> dict[Tensor, np.ndarray]:
    """Reverse-mode pass from a scalar ``loss``.

    Returns a map from every trainable leaf reached by the tape (plus every
    tensor in ``wrt``) to its gradient.  Leaves with no path to the loss get
    exact zeros.
    """
    if loss.data.size != 1:
        raise ContractError(f"loss must be a scalar tensor, got shape {loss.shape}")
    produced = {id(node.out) for node in tape.nodes}
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.rule(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key not in produced:
                leaves[key] = inp
            prev = grads.get(key)
            grads[key] = gi if prev is None else prev + gi
    if id(loss) not in produced and loss.requires_grad:
        leaves[id(loss)] = loss
    result: dict[Tensor, np.ndarray] = {}
    for key, leaf in leaves.items():
        result[leaf] = grads.get(key, np.zeros_like(leaf.data))
    for t in wrt or ():
        if t not in result:
            result[t] = np.zeros_like(t.data)
    return result


def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes.

    ``b`` may be 2-D (shared across all leading batch axes of ``a``) or carry
    exactly the same batch axes as ``a``.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    shared = b.ndim == 2
    if not shared and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: batch axes of {a.shape} and {b.shape} differ")
    A, B = a.data, b.data

    def rule(g):
        ga = g @ np.swapaxes(B, -1, -2) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            if shared:
                gb = A.reshape(-1, A.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = np.swapaxes(A, -1, -2) @ g
        return ga, gb

    return _emit(A @ B, (a, b), rule)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "add")
    return _emit(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "sub")
    return _emit(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "mul")
    A, B = a.data, b.data
    return _emit(A * B, (a, b), lambda g: (g * B, g * A))


def scale(a: Tensor, c: float) -> Tensor:
    return _emit(a.data * c, (a,), lambda g: (g * c,))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """``x + b`` where ``b`` matches the trailing axes of ``x``."""
    if b.ndim > x.ndim or x.shape[x.ndim - b.ndim:] != b.shape:
        raise ShapeError(f"add_bias: bias {b.shape} does not match trailing axes of {x.shape}")
    lead = x.ndim - b.ndim

    def rule(g):
        return g, (g.sum(axis=tuple(range(lead))) if lead else g)

    return _emit(x.data + b.data, (x, b), rule)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    src = x.shape
    value = x.data.reshape(shape)
    return _emit(value, (x,), lambda g: (g.reshape(src),))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _emit(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax along the last axis, max-shifted for stability."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def rule(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return _emit(p, (x,), rule)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise each row over the last axis, then scale and shift."""
    n = x.shape[-1]
    if gamma.shape != (n,) or beta.shape != (n,):
        raise ShapeError(
            f"layer_norm: gamma {gamma.shape} / beta {beta.shape} must be ({n},) for input {x.shape}"
        )
    if eps <= 0:
        raise ContractError("layer_norm: eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    G = gamma.data
    lead = tuple(range(x.ndim - 1))

    def rule(g):
        gx = None
        if x.requires_grad:
            gh = g * G
            gx = inv * (
                gh - gh.mean(axis=-1, keepdims=True)
                - xhat * (gh * xhat).mean(axis=-1, keepdims=True)
            )
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _emit(xhat * G + beta.data, (x, gamma, beta), rule)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    X = x.data
    u = _GELU_C * (X + 0.044715 * X**3)
    t = np.tanh(u)

    def rule(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * X**2)
        return (g * (0.5 * (1.0 + t) + 0.5 * X * (1.0 - t * t) * du),)

    return _emit(0.5 * X * (1.0 + t), (x,), rule)


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    """Mean over one axis, or over everything (scalar result) when ``axis`` is None."""
    if axis is None:
        size = x.data.size
        src = x.shape
        return _emit(np.array(x.data.mean()), (x,), lambda g: (np.full(src, g / size),))
    ax = axis % x.ndim
    count = x.shape[ax]

    def rule(g):
        return (np.broadcast_to(np.expand_dims(g, ax) / count, x.shape).copy(),)

    return _emit(x.data.mean(axis=ax), (x,), rule)


def total(x: Tensor) -> Tensor:
    """Sum of all entries as a scalar tensor."""
    src = x.shape
    return _emit(np.array(x.data.sum()), (x,), lambda g: (np.full(src, g),))
