"""Minimal define-by-run reverse-mode differentiation over 2-D float64 arrays.

Every quantity is a ``Node`` wrapping a (rows, cols) array.  Primitive
functions build new nodes and remember a closure that maps the output
adjoint to the input adjoints; ``backward`` walks the graph in reverse
topological order.  Only scalar (1x1) operands broadcast.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Operand shapes do not conform for a primitive."""


def _as2d(x) -> np.ndarray:
    a = np.array(x, dtype=np.float64)
    if a.ndim == 0:
        return a.reshape(1, 1)
    if a.ndim == 1:
        return a.reshape(1, -1)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D array, got shape {a.shape}")
    return a


class Node:
    __slots__ = ("value", "grad", "op", "parents", "requires_grad", "_backward")

    def __init__(self, value, op="const", parents=(), backward=None, requires_grad=False):
        self.value = value if isinstance(value, np.ndarray) and value.ndim == 2 else _as2d(value)
        self.grad: np.ndarray | None = None
        self.op = op
        self.parents: tuple[Node, ...] = tuple(parents)
        self.requires_grad = requires_grad
        self._backward = backward

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def T(self) -> "Node":
        return transpose(self)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)

    def backward(self) -> None:
        backward(self)

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, _lift(other))

    def __repr__(self) -> str:
        return f"Node(op={self.op}, shape={self.shape})"


def _lift(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


def constant(x) -> Node:
    """A node that never receives gradients."""
    return Node(_as2d(x), op="const")


def variable(x) -> Node:
    """A leaf node whose gradient is accumulated by ``backward``."""
    n = Node(_as2d(x), op="leaf", requires_grad=True)
    n.zero_grad()
    return n


@dataclass
class Parameter:
    name: str
    node: Node

    @property
    def value(self) -> np.ndarray:
        return self.node.value

    @value.setter
    def value(self, new) -> None:
        new = _as2d(new)
        if new.shape != self.node.value.shape:
            raise ShapeError(f"parameter {self.name}: shape {new.shape} != {self.node.value.shape}")
        self.node.value = new

    @property
    def grad(self) -> np.ndarray:
        return self.node.grad

    @property
    def shape(self) -> tuple[int, int]:
        return self.node.shape


class ParameterSet:
    """Named parameters, iterated in lexicographic name order."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def add(self, name: str, value) -> Node:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        p = Parameter(name, variable(value))
        self._params[name] = p
        return p.node

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self):
        for name in sorted(self._params):
            yield self._params[name]

    def names(self) -> list[str]:
        return sorted(self._params)

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.node.zero_grad()

    def size(self) -> int:
        return sum(p.value.size for p in self._params.values())


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Build nodes without recording adjoints (inference only)."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


def _make(value, op, parents, backward) -> Node:
    if _grad_enabled:
        for p in parents:
            if p.requires_grad:
                return Node(value, op, parents, backward, True)
    return Node(value, op, (), None, False)


def _shape_error(op, a, b) -> ShapeError:
    return ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.array([[g.sum()]])


def _check_elementwise(op, a: Node, b: Node) -> None:
    if a.shape != b.shape and a.shape != (1, 1) and b.shape != (1, 1):
        raise _shape_error(op, a, b)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def matmul(a: Node, b: Node) -> Node:
    if a.shape[1] != b.shape[0]:
        raise _shape_error("matmul", a, b)
    av, bv = a.value, b.value

    def bw(g):
        return (g @ bv.T if a.requires_grad else None,
                av.T @ g if b.requires_grad else None)

    return _make(av @ bv, "matmul", (a, b), bw)


def add(a: Node, b: Node) -> Node:
    _check_elementwise("add", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.value + b.value, "add", (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a: Node, b: Node) -> Node:
    _check_elementwise("sub", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.value - b.value, "sub", (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a: Node, b: Node) -> Node:
    _check_elementwise("mul", a, b)
    av, bv = a.value, b.value

    def bw(g):
        return (_unbroadcast(g * bv, av.shape) if a.requires_grad else None,
                _unbroadcast(g * av, bv.shape) if b.requires_grad else None)

    return _make(av * bv, "mul", (a, b), bw)


def scale(a: Node, c: float) -> Node:
    c = float(c)
    return _make(a.value * c, "scale", (a,), lambda g: (g * c,))


def concat_cols(nodes: Sequence[Node]) -> Node:
    rows = {n.shape[0] for n in nodes}
    if len(rows) != 1:
        raise ShapeError(f"concat_cols: row counts differ {[n.shape for n in nodes]}")
    widths = [n.shape[1] for n in nodes]
    bounds = np.cumsum([0] + widths)

    def bw(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(nodes)))

    return _make(np.concatenate([n.value for n in nodes], axis=1), "concat_cols", tuple(nodes), bw)


def reshape(a: Node, shape: tuple[int, int]) -> Node:
    """Row-major reshape."""
    r, c = shape
    if r * c != a.value.size:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {shape}")
    sa = a.shape
    return _make(a.value.reshape(r, c), "reshape", (a,), lambda g: (g.reshape(sa),))


def flatten(a: Node) -> Node:
    """Row-major flatten to a 1 x n row vector."""
    return reshape(a, (1, a.value.size))


def transpose(a: Node) -> Node:
    return _make(np.ascontiguousarray(a.value.T), "transpose", (a,), lambda g: (g.T,))


def tanh(a: Node) -> Node:
    y = np.tanh(a.value)
    return _make(y, "tanh", (a,), lambda g: (g * (1.0 - y * y),))


def exp(a: Node) -> Node:
    y = np.exp(a.value)
    return _make(y, "exp", (a,), lambda g: (g * y,))


def log(a: Node) -> Node:
    x = a.value
    if np.any(x <= 0):
        raise ValueError("log: non-positive input")
    return _make(np.log(x), "log", (a,), lambda g: (g / x,))


_prelu_trace: list | None = None


@contextlib.contextmanager
def trace_prelu():
    """Collect the negative-side masks of every ``prelu`` evaluated inside the block."""
    global _prelu_trace
    prev, _prelu_trace = _prelu_trace, []
    try:
        yield _prelu_trace
    finally:
        _prelu_trace = prev


def prelu(x: Node, slope: Node) -> Node:
    """Parametric ReLU with a scalar (1x1) negative-side slope.

    The derivative at exactly 0 is taken from the positive side.
    """
    if slope.shape != (1, 1):
        raise ShapeError(f"prelu: slope must be 1x1, got {slope.shape}")
    xv = x.value
    a = slope.value[0, 0]
    neg = xv < 0
    if _prelu_trace is not None:
        _prelu_trace.append(neg.copy())
    y = np.where(neg, a * xv, xv)

    def bw(g):
        gx = np.where(neg, a * g, g) if x.requires_grad else None
        ga = np.array([[np.sum(g * xv, where=neg)]]) if slope.requires_grad else None
        return gx, ga

    return _make(y, "prelu", (x, slope), bw)


def sum_all(a: Node) -> Node:
    sa = a.shape
    return _make(np.array([[a.value.sum()]]), "sum_all", (a,), lambda g: (np.full(sa, g[0, 0]),))


def sum_rows(a: Node) -> Node:
    """Sum across each row: (r, c) -> (r, 1)."""
    sa = a.shape
    return _make(a.value.sum(axis=1, keepdims=True), "sum_rows", (a,),
                 lambda g: (np.broadcast_to(g, sa).copy(),))


def sum_cols(a: Node) -> Node:
    """Sum down each column: (r, c) -> (1, c)."""
    sa = a.shape
    return _make(a.value.sum(axis=0, keepdims=True), "sum_cols", (a,),
                 lambda g: (np.broadcast_to(g, sa).copy(),))


def slice_rows(a: Node, start: int, stop: int) -> Node:
    r = a.shape[0]
    if not 0 <= start < stop <= r:
        raise ShapeError(f"slice_rows: [{start}:{stop}] out of range for shape {a.shape}")

    def bw(g):
        out = np.zeros(a.shape)
        out[start:stop] = g
        return (out,)

    return _make(a.value[start:stop].copy(), "slice_rows", (a,), bw)


def householder_product(V: Node) -> Node:
    """Orthogonal Q = H(v_0)...H(v_{k-1}) from the rows of V (k x d)."""
    Vv = V.value
    Q = kernels.householder_product(Vv)
    return _make(Q, "householder", (V,), lambda g: (kernels.householder_product_grad(Vv, Q, g),))


# ---------------------------------------------------------------------------
# reverse pass
# ---------------------------------------------------------------------------

def _topo(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Node) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``.

    Leaf gradients accumulate across calls; intermediate nodes get their
    adjoint for this pass only.
    """
    if loss.shape != (1, 1):
        raise ShapeError(f"backward: loss must be 1x1, got {loss.shape}")
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for node in reversed(_topo(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            g = np.zeros_like(node.value)
        if node._backward is None:
            if node.grad is None:
                node.grad = np.zeros_like(node.value)
            node.grad = node.grad + g
            continue
        node.grad = g
        for parent, pg in zip(node.parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


# ---------------------------------------------------------------------------
# finite-difference checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    passed: bool
    max_rel_err: float
    worst: tuple[str, tuple[int, int]] | None
    checked: int
    skipped: int
    tol: float
    errors: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"grad_check {status}: max rel err {self.max_rel_err:.3e} (tol {self.tol:g}) "
                f"over {self.checked} coords, {self.skipped} skipped at PReLU kinks")


def _named(params) -> list[tuple[str, Node]]:
    out = []
    for i, p in enumerate(params):
        if isinstance(p, Parameter):
            out.append((p.name, p.node))
        else:
            out.append((f"arg{i}", p))
    return out


def grad_check(f: Callable[[], Node], params: Iterable, h: float = 1e-6, tol: float = 1e-6,
               skip_kinks: bool = True) -> GradCheckReport:
    """Compare reverse-mode gradients of ``f`` against central differences.

    ``f`` takes no arguments and must rebuild its graph from the current
    values of ``params`` (Parameters or leaf Nodes).  The error per
    coordinate is |ad - fd| / max(|ad|, |fd|, 1).  With ``skip_kinks`` a
    coordinate is skipped when the +h and -h evaluations put some PReLU
    input on different sides of zero.  Leaves hold the reverse-mode
    gradient afterwards.
    """
    if h <= 0:
        raise ValueError("grad_check: h must be positive")
    named = _named(params)
    for _, node in named:
        node.zero_grad()
    backward(f())
    analytic = {name: node.grad.copy() for name, node in named}

    worst = None
    max_err = 0.0
    checked = skipped = 0
    errors = {}
    for name, node in named:
        err = np.zeros_like(node.value)
        for idx in np.ndindex(*node.shape):
            orig = node.value[idx]
            with trace_prelu() as tp:
                node.value[idx] = orig + h
                fp = f().value[0, 0]
            with trace_prelu() as tm:
                node.value[idx] = orig - h
                fm = f().value[0, 0]
            node.value[idx] = orig
            if skip_kinks and any(not np.array_equal(a, b) for a, b in zip(tp, tm)):
                skipped += 1
                continue
            fd = (fp - fm) / (2.0 * h)
            ad = analytic[name][idx]
            e = abs(ad - fd) / max(abs(ad), abs(fd), 1.0)
            err[idx] = e
            checked += 1
            if worst is None or e > max_err:
                max_err, worst = e, (name, idx)
        errors[name] = err
    return GradCheckReport(max_err < tol, max_err, worst, checked, skipped, tol, errors)
