"""Dense float64 tensor arithmetic with reverse-mode differentiation.

The engine is graph-building all the way down: every backward rule is written
in terms of the same primitives, so the tensors returned by ``grad`` are
themselves differentiable and a second call to ``grad`` through them yields
exact second-order derivatives. That is what lets a gradient-norm penalty on a
critic's input be differentiated with respect to the critic's own parameters.

Exceptions: ``pairwise_dist`` and ``row_min`` have handwritten first-order
backward rules that treat the incoming adjoint as a constant. They are only
used inside the generator's distance regularizers, which never need a second
derivative.

All values are float64; any operation producing a non-finite value raises
NumericError immediately.
"""

from __future__ import annotations

import numpy as np

from .errors import GraphError, NumericError


class Tensor:
    """A node in the computation graph.

    parents is a sequence of (parent_tensor, vjp) pairs; each vjp maps the
    adjoint of this node (a Tensor) to the adjoint contribution for that
    parent (a Tensor of the parent's shape).
    """

    __slots__ = ("values", "parents", "name")

    def __init__(self, values, parents=(), name=None):
        self.values = np.asarray(values, dtype=np.float64)
        if not np.isfinite(self.values).all():
            raise NumericError(f"non-finite values in tensor {name or '<anon>'}")
        self.parents = parents
        self.name = name

    @property
    def shape(self):
        return self.values.shape

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, name={self.name})"

    # operator sugar
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _lift(other))


def tensor(values, name=None) -> Tensor:
    """Wrap values as a leaf tensor."""
    return Tensor(values, name=name)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: Tensor, shape) -> Tensor:
    """Sum an adjoint down to ``shape`` after numpy-style broadcasting."""
    if g.shape == tuple(shape):
        return g
    extra = len(g.shape) - len(shape)
    if extra > 0:
        g = sum_(g, axis=tuple(range(extra)))
    axes = tuple(
        i for i, (got, want) in enumerate(zip(g.shape, shape)) if want == 1 and got != 1
    )
    if axes:
        g = sum_(g, axis=axes, keepdims=True)
    if g.shape != tuple(shape):
        g = reshape(g, shape)
    return g


# ---------------------------------------------------------------------------
# primitives (all double-differentiable unless noted)
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(
        a.values + b.values,
        parents=(
            (a, lambda g: _unbroadcast(g, a.shape)),
            (b, lambda g: _unbroadcast(g, b.shape)),
        ),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(
        a.values - b.values,
        parents=(
            (a, lambda g: _unbroadcast(g, a.shape)),
            (b, lambda g: _unbroadcast(neg(g), b.shape)),
        ),
    )


def neg(a: Tensor) -> Tensor:
    return Tensor(-a.values, parents=((a, lambda g: neg(g)),))


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(
        a.values * b.values,
        parents=(
            (a, lambda g: _unbroadcast(mul(g, b), a.shape)),
            (b, lambda g: _unbroadcast(mul(g, a), b.shape)),
        ),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(
        a.values @ b.values,
        parents=(
            (a, lambda g: matmul(g, transpose(b))),
            (b, lambda g: matmul(transpose(a), g)),
        ),
    )


def transpose(a: Tensor) -> Tensor:
    return Tensor(a.values.T, parents=((a, lambda g: transpose(g)),))


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    return Tensor(
        a.values.reshape(shape), parents=((a, lambda g: reshape(g, a.shape)),)
    )


def sum_(a: Tensor, axis=None, keepdims=False) -> Tensor:
    def vjp(g):
        if axis is None:
            kept = (1,) * a.values.ndim
        elif keepdims:
            kept = g.shape
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            axes = tuple(ax % a.values.ndim for ax in axes)
            kept = tuple(
                1 if i in axes else s for i, s in enumerate(a.shape)
            )
        return broadcast_to(reshape(g, kept), a.shape)

    return Tensor(a.values.sum(axis=axis, keepdims=keepdims), parents=((a, vjp),))


def broadcast_to(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    return Tensor(
        np.broadcast_to(a.values, shape).copy(),
        parents=((a, lambda g: _unbroadcast(g, a.shape)),),
    )


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    count = a.values.size if axis is None else np.prod(
        [a.shape[ax] for ax in ((axis,) if isinstance(axis, int) else axis)]
    )
    return mul(sum_(a, axis=axis, keepdims=keepdims), Tensor(1.0 / count))


def square(a: Tensor) -> Tensor:
    return Tensor(
        np.square(a.values), parents=((a, lambda g: mul(g, mul(Tensor(2.0), a))),)
    )


def sqrt(a: Tensor) -> Tensor:
    out = Tensor(np.sqrt(a.values))
    out.parents = ((a, lambda g: mul(g, mul(Tensor(0.5), reciprocal(out))),),)
    return out


def exp(a: Tensor) -> Tensor:
    out = Tensor(np.exp(a.values))
    out.parents = ((a, lambda g: mul(g, out)),)
    return out


def reciprocal(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore"):  # 1/0 -> inf, rejected by the
        out = Tensor(1.0 / a.values)    # finiteness check with a clear error
    out.parents = ((a, lambda g: neg(mul(g, mul(out, out)))),)
    return out


def leaky_rectifier(a: Tensor, slope: float = 0.2) -> Tensor:
    # derivative is piecewise constant, so the second-order path through the
    # slope mask is exactly zero almost everywhere
    mask = Tensor(np.where(a.values >= 0, 1.0, slope))
    return Tensor(a.values * mask.values, parents=((a, lambda g: mul(g, mask)),))


def elementwise_multiply(a: Tensor, b: Tensor) -> Tensor:
    return mul(a, b)


def elementwise_subtract(a: Tensor, b: Tensor) -> Tensor:
    return sub(a, b)


def reduce_mean(a: Tensor) -> Tensor:
    return mean(a)


def row_l2_norm(a: Tensor) -> Tensor:
    """Per-row Euclidean norm of a 2-D tensor; shape (n_rows,)."""
    return sqrt(sum_(square(a), axis=1))


def block_softmax(logits: Tensor, block_slices) -> Tensor:
    """Softmax applied independently to each column block of each row."""
    width = logits.shape[1]
    shift = np.empty_like(logits.values)
    spread = np.zeros((width, width))
    for blk in block_slices:
        shift[:, blk] = logits.values[:, blk].max(axis=1, keepdims=True)
        spread[blk, blk] = 1.0
    # subtracting the (detached) block max is exact: softmax is invariant to
    # block-constant shifts
    e = exp(sub(logits, Tensor(shift)))
    sums = matmul(e, Tensor(spread))
    return mul(e, reciprocal(sums))


def pairwise_dist(a: Tensor, b: Tensor) -> Tensor:
    """Euclidean distance matrix D[i, j] = ||a_i - b_j||_2. First-order only.

    The backward rule uses the zero subgradient where a distance is exactly 0.
    """
    aa = np.einsum("ij,ij->i", a.values, a.values)
    bb = np.einsum("ij,ij->i", b.values, b.values)
    sq = aa[:, None] + bb[None, :] - 2.0 * (a.values @ b.values.T)
    dist = np.sqrt(np.maximum(sq, 0.0))

    def _weights(g):
        w = np.zeros_like(dist)
        np.divide(g.values, dist, out=w, where=dist > 0)
        return w

    def vjp_a(g):
        w = _weights(g)
        return Tensor(w.sum(axis=1)[:, None] * a.values - w @ b.values)

    def vjp_b(g):
        w = _weights(g)
        return Tensor(w.sum(axis=0)[:, None] * b.values - w.T @ a.values)

    return Tensor(dist, parents=((a, vjp_a), (b, vjp_b)))


def row_min(a: Tensor) -> Tensor:
    """Minimum of each row of a 2-D tensor; first-order only.

    Ties route the adjoint to the lowest-index minimizer.
    """
    idx = np.argmin(a.values, axis=1)

    def vjp(g):
        out = np.zeros_like(a.values)
        out[np.arange(a.values.shape[0]), idx] = g.values
        return Tensor(out)

    return Tensor(a.values.min(axis=1), parents=((a, vjp),))


# ---------------------------------------------------------------------------
# reverse-mode differentiation
# ---------------------------------------------------------------------------

def _topo_order(output: Tensor) -> list[Tensor]:
    order, seen, stack = [], set(), [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            stack.append((parent, False))
    return order


def grad(output: Tensor, wrt: list[Tensor]) -> list[Tensor]:
    """Adjoints of a scalar output with respect to ``wrt`` tensors.

    The returned tensors live in the graph: differentiating an expression
    built from them yields second-order derivatives.
    """
    if output.values.size != 1:
        raise GraphError("grad target must be a scalar (size-1) tensor")
    order = _topo_order(output)
    in_graph = {id(t) for t in order}
    for t in wrt:
        if id(t) not in in_graph:
            raise GraphError(f"tensor {t.name or '<anon>'} not in the output's graph")
    # only nodes whose subgraph contains a wrt tensor need adjoints; this
    # skips vjp work on constant branches entirely
    needed = {id(t) for t in wrt}
    for node in order:  # parents precede their consumers
        if id(node) not in needed and any(id(p) in needed for p, _ in node.parents):
            needed.add(id(node))
    adjoints: dict[int, Tensor] = {id(output): Tensor(np.ones(output.shape))}
    for node in reversed(order):
        g = adjoints.get(id(node))
        if g is None:
            continue
        for parent, vjp in node.parents:
            if id(parent) not in needed:
                continue
            contrib = vjp(g)
            prev = adjoints.get(id(parent))
            adjoints[id(parent)] = contrib if prev is None else add(prev, contrib)
    return [
        adjoints.get(id(t), Tensor(np.zeros(t.shape))) for t in wrt
    ]


def gradient_as_node(output: Tensor, wrt: Tensor) -> Tensor:
    """Gradient of a scalar w.r.t. one tensor, as a differentiable node."""
    return grad(output, [wrt])[0]


# ---------------------------------------------------------------------------
# parameters and the optimizer
# ---------------------------------------------------------------------------

class ParameterSet:
    """Named leaf tensors with paired gradient arrays."""

    def __init__(self, params: dict[str, Tensor]):
        self.params = params
        self.grads: dict[str, np.ndarray] = {
            k: np.zeros_like(v.values) for k, v in params.items()
        }

    def names(self) -> list[str]:
        return list(self.params)

    def tensors(self) -> list[Tensor]:
        return list(self.params.values())

    def set_grads(self, grad_tensors: list[Tensor]) -> None:
        for name, g in zip(self.params, grad_tensors):
            if g.shape != self.params[name].shape:
                raise GraphError(f"gradient shape mismatch for parameter {name!r}")
            self.grads[name] = g.values

    def zero_grads(self) -> None:
        for name in self.grads:
            self.grads[name][...] = 0.0


class Adam:
    """Adaptive-moment update with bias correction; state persists per parameter."""

    def __init__(self, learning_rate=0.01, beta1=0.0, beta2=0.9, epsilon=1e-8):
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = epsilon
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, ps: ParameterSet) -> None:
        self.t += 1
        for name, p in ps.params.items():
            g = ps.grads[name]
            m = self._m.setdefault(name, np.zeros_like(p.values))
            v = self._v.setdefault(name, np.zeros_like(p.values))
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            m_hat = m / (1.0 - self.beta1 ** self.t)
            v_hat = v / (1.0 - self.beta2 ** self.t)
            p.values -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_step(params: ParameterSet, optimizer: Adam) -> None:
    optimizer.step(params)
