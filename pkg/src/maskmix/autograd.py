"""Define-by-run reverse-mode differentiation over dense float64 arrays.

Every differentiable operation returns a new :class:`Tensor` that remembers
its parents and a closure mapping the output gradient to parent gradients.
:func:`backward` walks that graph once in reverse topological order.

Elementwise binary operations follow numpy broadcasting; gradients are summed
back onto the broadcast axes. Row-wise operations (``l2_norm``,
``normalize``, ``cosine_sim``) reduce along the last axis so a batch can be
carried as a 2-D tensor with one row per sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AutogradError, NonFiniteError, ShapeError, ZeroNormError

__all__ = [
    "Tensor", "AdamState", "tensor", "add", "sub", "mul", "neg", "matvec",
    "matmul", "transpose", "relu", "sigmoid", "sin", "cos", "mean", "sum",
    "abs_sum", "l2_norm", "normalize", "cosine_sim", "take", "embed",
    "concat", "backward", "topological_order", "adam_step",
]


class Tensor:
    """A float64 array (0-D, 1-D or 2-D) that can take part in a graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op", "_consumed")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, op="leaf"):
        arr = np.array(data, dtype=np.float64) if not isinstance(data, np.ndarray) else data
        if arr.dtype != np.float64:
            arr = arr.astype(np.float64)
        if arr.ndim > 2:
            raise ShapeError("tensor", arr.shape)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = _parents
        self._backward = _backward
        self.op = op
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def is_leaf(self):
        return not self._parents

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        other = tensor(other)
        if other.data.ndim == 1 and self.data.ndim == 2:
            return matvec(self, other)
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def tensor(x):
    """Wrap ``x`` as a constant tensor unless it already is one."""
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward, op):
    # parents that cannot carry gradient are pruned so backward never visits them
    live = tuple(p for p in parents if p.requires_grad)
    if not live:
        return Tensor(data, op=op)
    return Tensor(data, requires_grad=True, _parents=parents, _backward=backward, op=op)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# -- elementwise -----------------------------------------------------------

def add(a, b):
    a, b = tensor(a), tensor(b)
    _broadcast_shape("add", a, b)

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), back, "add")


def sub(a, b):
    a, b = tensor(a), tensor(b)
    _broadcast_shape("sub", a, b)

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), back, "sub")


def mul(a, b):
    """Elementwise (Hadamard) product."""
    a, b = tensor(a), tensor(b)
    _broadcast_shape("elementwise_mul", a, b)

    def back(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), back, "elementwise_mul")


elementwise_mul = mul


def neg(a):
    a = tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def relu(a):
    a = tensor(a)
    on = a.data > 0
    return _node(np.where(on, a.data, 0.0), (a,), lambda g: (g * on,), "relu")


def sigmoid(a):
    a = tensor(a)
    x = a.data
    # split by sign so large |x| never overflows exp
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def sin(a):
    a = tensor(a)
    return _node(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),), "sin")


def cos(a):
    a = tensor(a)
    return _node(np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),), "cos")


# -- linear algebra --------------------------------------------------------

def matvec(A, x):
    A, x = tensor(A), tensor(x)
    if A.data.ndim != 2 or x.data.ndim != 1 or A.shape[1] != x.shape[0]:
        raise ShapeError("matvec", A.shape, x.shape)

    def back(g):
        return np.outer(g, x.data), A.data.T @ g

    return _node(A.data @ x.data, (A, x), back, "matvec")


def matmul(A, B):
    A, B = tensor(A), tensor(B)
    if A.data.ndim != 2 or B.data.ndim != 2 or A.shape[1] != B.shape[0]:
        raise ShapeError("matmul", A.shape, B.shape)

    def back(g):
        return g @ B.data.T, A.data.T @ g

    return _node(A.data @ B.data, (A, B), back, "matmul")


def transpose(a):
    a = tensor(a)
    if a.data.ndim != 2:
        raise ShapeError("transpose", a.shape)
    return _node(a.data.T, (a,), lambda g: (g.T,), "transpose")


# -- reductions ------------------------------------------------------------

def sum(a):  # noqa: A001 - mirrors numpy naming
    a = tensor(a)
    return _node(np.asarray(a.data.sum()), (a,), lambda g: (np.full(a.shape, g),), "sum")


def mean(a):
    a = tensor(a)
    n = a.data.size
    if n == 0:
        raise ShapeError("mean", a.shape)
    return _node(np.asarray(a.data.mean()), (a,), lambda g: (np.full(a.shape, g / n),), "mean")


def abs_sum(a):
    a = tensor(a)
    s = np.sign(a.data)
    return _node(np.asarray(np.abs(a.data).sum()), (a,), lambda g: (g * s,), "abs_sum")


def l2_norm(a):
    """Euclidean norm along the last axis (a scalar for 1-D input)."""
    a = tensor(a)
    n = np.sqrt((a.data * a.data).sum(axis=-1))

    def back(g):
        safe = np.where(n > 0, n, 1.0)
        return (np.expand_dims(g / safe, -1) * a.data,)

    return _node(n, (a,), back, "l2_norm")


def _row_norms(op, x):
    n = np.sqrt((x * x).sum(axis=-1, keepdims=True))
    if np.any(n == 0):
        raise ZeroNormError(f"{op}: zero-norm input")
    return n


def normalize(a):
    """Scale each row (or the vector) to unit Euclidean norm."""
    a = tensor(a)
    n = _row_norms("normalize", a.data)
    y = a.data / n

    def back(g):
        return ((g - y * (y * g).sum(axis=-1, keepdims=True)) / n,)

    return _node(y, (a,), back, "normalize")


def cosine_sim(a, b):
    """Cosine similarity along the last axis."""
    a, b = tensor(a), tensor(b)
    if a.shape != b.shape:
        raise ShapeError("cosine_sim", a.shape, b.shape)
    na, nb = _row_norms("cosine_sim", a.data), _row_norms("cosine_sim", b.data)
    ua, ub = a.data / na, b.data / nb
    c = (ua * ub).sum(axis=-1)

    def back(g):
        g = np.expand_dims(g, -1)
        ck = np.expand_dims(c, -1)
        return g * (ub - ck * ua) / na, g * (ua - ck * ub) / nb

    return _node(c, (a, b), back, "cosine_sim")


# -- indexing --------------------------------------------------------------

def take(a, index):
    """Gather entries along the last axis."""
    a = tensor(a)
    index = np.asarray(index, dtype=np.intp)
    size = a.shape[-1]
    if index.size and (index.min() < -size or index.max() >= size):
        raise ShapeError("take", a.shape, index.shape)

    def back(g):
        out = np.zeros(a.shape)
        np.add.at(out, (..., index), g)
        return (out,)

    return _node(a.data[..., index], (a,), back, "take")


def embed(a, index, size):
    """Place the last-axis entries of ``a`` at ``index`` inside zeros of width ``size``.

    ``index`` must not repeat. This is the adjoint of :func:`take`.
    """
    a = tensor(a)
    index = np.asarray(index, dtype=np.intp)
    if a.shape[-1] != index.size:
        raise ShapeError("embed", a.shape, index.shape)
    out = np.zeros(a.shape[:-1] + (size,))
    out[..., index] = a.data
    return _node(out, (a,), lambda g: (g[..., index],), "embed")


def concat(parts):
    parts = [tensor(p) for p in parts]
    lead = {p.shape[:-1] for p in parts}
    if len(lead) != 1:
        raise ShapeError("concat", *[p.shape for p in parts])
    edges = np.cumsum([0] + [p.shape[-1] for p in parts])

    def back(g):
        return tuple(g[..., edges[i]:edges[i + 1]] for i in range(len(parts)))

    return _node(np.concatenate([p.data for p in parts], axis=-1), tuple(parts), back, "concat")


# -- reverse pass ----------------------------------------------------------

def topological_order(root):
    """Nodes reachable from ``root`` with every node after its inputs."""
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Populate ``.grad`` on every ``requires_grad`` leaf reachable from ``loss``.

    Returns a dict mapping each such leaf to its gradient array. The graph may
    be differentiated once; leaves must have no gradient pending (call
    ``zero_grad``) so nothing is accumulated twice.
    """
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        shape = loss.shape if isinstance(loss, Tensor) else type(loss)
        raise AutogradError(f"backward needs a scalar loss, got shape {shape}")
    if loss._consumed:
        raise AutogradError("backward already ran on this graph; rebuild it")
    if not loss.requires_grad:
        raise AutogradError("loss does not depend on any tensor requiring grad")

    order = topological_order(loss)
    leaves = [n for n in order if n.is_leaf]
    for leaf in leaves:
        if leaf.grad is not None:
            raise AutogradError("leaf already holds a gradient; call zero_grad before reuse")

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
    loss._consumed = True
    for leaf in leaves:
        if leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)
    return {leaf: leaf.grad for leaf in leaves}


# -- optimizer -------------------------------------------------------------

@dataclass
class AdamState:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **hyper):
        return cls(
            first_moment=[np.zeros_like(p) for p in params],
            second_moment=[np.zeros_like(p) for p in params],
            **hyper,
        )


def adam_step(params, grads, state, names=None):
    """One bias-corrected Adam update.

    Returns ``(new_params, new_state)``; inputs are left untouched.
    """
    if not (len(params) == len(grads) == len(state.first_moment) == len(state.second_moment)):
        raise ShapeError("adam_step", (len(params),), (len(grads),), (len(state.first_moment),))
    names = names or [f"param[{i}]" for i in range(len(params))]
    for p, g, m, name in zip(params, grads, state.first_moment, names):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"adam_step {name}", p.shape, g.shape, m.shape)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient in {name}", block=name)

    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1.0 - b1 ** t, 1.0 - b2 ** t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_params.append(p - state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon))
        new_m.append(m)
        new_v.append(v)
    new_state = AdamState(
        learning_rate=state.learning_rate, beta1=b1, beta2=b2, epsilon=state.epsilon,
        step_count=t, first_moment=new_m, second_moment=new_v,
    )
    return new_params, new_state
