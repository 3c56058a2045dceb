"""Small reverse-mode automatic differentiation over dense float64 arrays.

Tensors are at most rank 2 (batch x features).  Every op records its
parents and a closure that maps the output gradient onto the parents; the
backward pass walks reachable nodes in reverse creation order, which is a
valid reverse topological order because a node is always created after
its inputs.
"""

import itertools

import numpy as np

_ids = itertools.count()

GUMBEL_CLAMP = 1e-10


class ShapeError(ValueError):
    pass


def _as_array(values):
    arr = np.array(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError("non-finite value in tensor construction")
    return arr


def _unbroadcast(grad, shape):
    # Sum out leading (batch) axes that were broadcast.
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not conform") from None


class Tensor:
    """Dense real array with an optional gradient.

    Leaves created by the user carry ``requires_grad``; results of ops
    require grad whenever any input does.
    """

    __array_priority__ = 100

    def __init__(self, values, requires_grad=False):
        self.values = _as_array(values)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self._op = "leaf"
        self._id = next(_ids)

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    def __len__(self):
        return len(self.values)

    def __repr__(self):
        return f"Tensor({self.values!r}, op={self._op}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.values.copy()

    def item(self):
        return float(self.values)

    def detach(self):
        return Tensor(self.values)

    def zero_grad(self):
        self.grad = None

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _result(values, op, parents, backward):
        if not np.all(np.isfinite(values)):
            raise FloatingPointError(f"non-finite output from op '{op}'")
        out = Tensor.__new__(Tensor)
        out.values = values
        out.grad = None
        out._id = next(_ids)
        out._op = op
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = tensor(other)
        _check_broadcast("add", self, other)

        def backward(g):
            return _unbroadcast(g, self.shape), _unbroadcast(g, other.shape)

        return Tensor._result(self.values + other.values, "add", (self, other), backward)

    __radd__ = __add__

    def __sub__(self, other):
        other = tensor(other)
        _check_broadcast("sub", self, other)

        def backward(g):
            return _unbroadcast(g, self.shape), _unbroadcast(-g, other.shape)

        return Tensor._result(self.values - other.values, "sub", (self, other), backward)

    def __rsub__(self, other):
        return tensor(other) - self

    def __neg__(self):
        return Tensor._result(-self.values, "neg", (self,), lambda g: (-g,))

    def __mul__(self, other):
        other = tensor(other)
        _check_broadcast("mul", self, other)
        a, b = self.values, other.values

        def backward(g):
            return _unbroadcast(g * b, self.shape), _unbroadcast(g * a, other.shape)

        return Tensor._result(a * b, "mul", (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = tensor(other)
        _check_broadcast("div", self, other)
        a, b = self.values, other.values
        with np.errstate(divide="ignore", invalid="ignore"):
            out = a / b

        def backward(g):
            return (_unbroadcast(g / b, self.shape),
                    _unbroadcast(-g * a / (b * b), other.shape))

        return Tensor._result(out, "div", (self, other), backward)

    def __rtruediv__(self, other):
        return tensor(other) / self

    def __matmul__(self, other):
        other = tensor(other)
        a, b = self.values, other.values
        if a.ndim not in (1, 2) or b.ndim != 2 or a.shape[-1] != b.shape[0]:
            raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")

        def backward(g):
            if a.ndim == 1:
                return g @ b.T, np.outer(a, g)
            return g @ b.T, a.T @ g

        return Tensor._result(a @ b, "matmul", (self, other), backward)

    def scale(self, c):
        c = float(c)
        return Tensor._result(self.values * c, "scale", (self,), lambda g: (g * c,))

    # -- elementwise --------------------------------------------------------

    def exp(self):
        with np.errstate(over="ignore"):
            out = np.exp(self.values)
        return Tensor._result(out, "exp", (self,), lambda g: (g * out,))

    def log(self):
        x = self.values
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.log(x)
        return Tensor._result(out, "log", (self,), lambda g: (g / x,))

    def tanh(self):
        out = np.tanh(self.values)
        return Tensor._result(out, "tanh", (self,), lambda g: (g * (1.0 - out * out),))

    def relu(self):
        mask = self.values > 0
        return Tensor._result(self.values * mask, "relu", (self,), lambda g: (g * mask,))

    def pos_part(self):
        """max(0, x)."""
        return self.relu()

    def neg_part(self):
        """min(0, x); gradient flows only where x < 0."""
        mask = self.values < 0
        return Tensor._result(self.values * mask, "neg_part", (self,), lambda g: (g * mask,))

    # -- reductions and shape ops ------------------------------------------

    def sum(self, axis=None):
        shape = self.shape

        def backward(g):
            if axis is None:
                return (np.broadcast_to(g, shape).copy(),)
            return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

        return Tensor._result(np.asarray(self.values.sum(axis=axis)), "sum", (self,), backward)

    def mean(self, axis=None):
        n = self.values.size if axis is None else self.shape[axis]
        return self.sum(axis).scale(1.0 / n)

    def softmax(self):
        x = self.values
        e = np.exp(x - x.max(axis=-1, keepdims=True))
        out = e / e.sum(axis=-1, keepdims=True)

        def backward(g):
            return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

        return Tensor._result(out, "softmax", (self,), backward)

    def log_softmax(self):
        x = self.values
        shifted = x - x.max(axis=-1, keepdims=True)
        out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        probs = np.exp(out)

        def backward(g):
            return (g - probs * g.sum(axis=-1, keepdims=True),)

        return Tensor._result(out, "log_softmax", (self,), backward)

    def gather(self, index):
        """Pick one entry per row: out[b] = x[b, index[b]]."""
        index = np.asarray(index, dtype=np.int64)
        if self.ndim != 2 or index.shape != (self.shape[0],):
            raise ShapeError(f"gather: tensor {self.shape} with index {index.shape}")
        rows = np.arange(self.shape[0])

        def backward(g):
            out = np.zeros(self.shape)
            out[rows, index] = g
            return (out,)

        return Tensor._result(self.values[rows, index], "gather", (self,), backward)

    def __getitem__(self, key):
        shape = self.shape

        def backward(g):
            out = np.zeros(shape)
            np.add.at(out, key, g)
            return (out,)

        return Tensor._result(np.array(self.values[key]), "index", (self,), backward)

    @property
    def T(self):
        if self.ndim != 2:
            raise ShapeError("transpose needs a rank-2 tensor")
        return Tensor._result(self.values.T.copy(), "transpose", (self,), lambda g: (g.T,))

    def reshape(self, *shape):
        old = self.shape
        return Tensor._result(self.values.reshape(*shape), "reshape", (self,),
                              lambda g: (g.reshape(old),))

    # -- backward -----------------------------------------------------------

    def backward(self):
        backward(self)


def tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(values):
    return Tensor(values, requires_grad=True)


def concat(tensors, axis=-1):
    tensors = [tensor(t) for t in tensors]
    values = np.concatenate([t.values for t in tensors], axis=axis)
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._result(values, "concat", tuple(tensors), backward)


def straight_through(hard_values, soft):
    """Forward ``hard_values``, backward as if the output were ``soft``."""
    hard_values = _as_array(hard_values)
    if hard_values.shape != soft.shape:
        raise ShapeError("straight_through: hard and soft shapes differ")
    return Tensor._result(hard_values, "straight_through", (soft,), lambda g: (g,))


def backward(loss):
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
    if loss.values.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    nodes = {}
    stack = [loss]
    while stack:
        node = stack.pop()
        if node._id in nodes:
            continue
        nodes[node._id] = node
        stack.extend(p for p in node._parents if p.requires_grad)

    grads = {loss._id: np.ones_like(loss.values)}
    for node_id in sorted(nodes, reverse=True):
        node = nodes[node_id]
        g = grads.pop(node_id, None)
        if node._backward is None:
            # leaf
            if g is None:
                g = np.zeros_like(node.values)
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        if g is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            pg = np.asarray(pg, dtype=np.float64).reshape(parent.shape)
            if parent._id in grads:
                grads[parent._id] = grads[parent._id] + pg
            else:
                grads[parent._id] = pg


def draw_uniforms(shape, rng=None):
    rng = np.random.default_rng() if rng is None else rng
    return np.clip(rng.random(shape), GUMBEL_CLAMP, 1.0 - GUMBEL_CLAMP)


def gumbel_noise(shape, rng):
    return -np.log(-np.log(draw_uniforms(shape, rng)))


def gumbel_softmax_sample(logits, temperature=1.0, hard=True, rng=None):
    """Relaxed categorical sample over the last axis of ``logits``.

    With ``hard`` the forward value is the one-hot argmax while gradients
    follow the soft sample (straight-through).
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    rng = np.random.default_rng() if rng is None else rng
    logits = tensor(logits)
    soft = ((logits + gumbel_noise(logits.shape, rng)).scale(1.0 / temperature)).softmax()
    if not hard:
        return soft
    return straight_through(one_hot(soft.values.argmax(axis=-1), soft.shape[-1]), soft)


def conditional_gumbel_softmax(logits, index, temperature=1.0, rng=None, uniforms=None):
    """Soft relaxation drawn from the Gumbel posterior given the argmax ``index``.

    If ``index`` was itself sampled from softmax(logits), the pair
    (index, sample) has the same law as a plain Gumbel-softmax draw with its
    argmax.  Conditioning on the category keeps the perturbed logits a
    differentiable function of the logits for fixed uniforms, so the
    pathwise gradient complements the score-function term of the category.

    Pass the same ``uniforms`` again to rebuild an identical sample inside
    a fresh graph.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    logits = tensor(logits)
    if logits.ndim != 2:
        raise ShapeError("conditional_gumbel_softmax expects (batch, categories) logits")
    index = np.asarray(index, dtype=np.int64)
    n, k = logits.shape
    if uniforms is None:
        uniforms = draw_uniforms((n, k), rng)
    u = np.asarray(uniforms)
    if u.shape != (n, k):
        raise ShapeError(f"uniforms shape {u.shape} != logits shape {(n, k)}")
    mask = one_hot(index, k)
    neg_log_u = -np.log(u)
    top = neg_log_u[np.arange(n), index][:, None]  # -log u_k
    # Top perturbed log-prob is Gumbel(0); others are truncated below it.
    logp = logits.log_softmax()
    others = -((neg_log_u * (-logp).exp() + top).log())
    z = others * (1.0 - mask) + (-np.log(top)) * mask
    return z.scale(1.0 / temperature).softmax()


def one_hot(index, k):
    index = np.asarray(index, dtype=np.int64)
    out = np.zeros(index.shape + (k,))
    np.put_along_axis(out, index[..., None], 1.0, axis=-1)
    return out
