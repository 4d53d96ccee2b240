"""Dense tensors with define-by-run reverse-mode differentiation.

A :class:`Tensor` wraps a numpy array. Every operation on tensors that
require gradients records its parents and a vector-Jacobian closure; the
graph is rebuilt on each forward pass and walked once by :meth:`Tensor.backward`.

Shape conventions follow numpy broadcasting. ``matmul`` works on the two
trailing axes, ``softmax`` on the last axis, ``conv1d`` on channel-first
``(batch, channels, time)`` input.
"""
import contextlib
import os
import threading

import numpy as np
from scipy.special import erf

from . import kernels


class ShapeError(ValueError):
    pass


_state = {"debug": os.environ.get("PATCHECG_DEBUG", "0") not in ("", "0")}
_local = threading.local()


def is_grad_enabled():
    return getattr(_local, "grad_enabled", True)


def set_debug(enabled):
    """Reject non-finite operands of every operation when ``enabled``."""
    _state["debug"] = bool(enabled)


def is_debug():
    return _state["debug"]


@contextlib.contextmanager
def no_grad():
    prev = is_grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "op")
    __array_ufunc__ = None  # make ``ndarray op Tensor`` defer to Tensor

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None
        self.op = "leaf"

    # ------------------------------------------------------------ basics
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data)

    def __len__(self):
        return self.data.shape[0]

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def zero_grad(self):
        self.grad = None

    # ------------------------------------------------------------ autodiff
    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
        for leaf, g in _backprop(self, grad).items():
            if leaf.grad is None:
                leaf.grad = g.copy()
            else:
                leaf.grad += g

    # ------------------------------------------------------------ operators
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, neg(_lift(other, self)))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)


def _lift(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _check_finite(arrays, op):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FloatingPointError(f"non-finite operand passed to {op}")


def _make(data, parents, vjp, op):
    """Wrap ``data`` as the output of ``op`` and record provenance if needed."""
    out = Tensor(data)
    if _state["debug"]:
        _check_finite([p.data for p in parents], op)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    out.op = op
    return out


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _topo_order(root):
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


def _backprop(root, seed=None):
    if seed is None:
        if root.size != 1:
            raise ShapeError(f"backward needs a scalar seed tensor, got shape {root.shape}")
        seed = np.ones_like(root.data)
    else:
        seed = np.asarray(seed, dtype=root.dtype)
        if seed.shape != root.shape:
            raise ShapeError(f"seed shape {seed.shape} does not match {root.shape}")
    leaves = {}
    if not root.requires_grad:
        return leaves
    grads = {id(root): seed}
    for node in reversed(_topo_order(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._vjp is None:
            leaves[node] = g
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return leaves


def grad(loss, wrt):
    """Gradients of scalar ``loss`` w.r.t. each tensor in ``wrt``.

    Leaves that ``loss`` does not depend on get an all-zero array. ``.grad``
    attributes are left untouched.
    """
    found = _backprop(loss)
    return [found[t] if t in found else np.zeros_like(t.data) for t in wrt]


# ---------------------------------------------------------------- elementwise


def _binary_shapes(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def add(a, b):
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    _binary_shapes(a, b, "add")
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def mul(a, b):
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    _binary_shapes(a, b, "mul")
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
                 "mul")


def neg(a):
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def power(a, exponent):
    exponent = float(exponent)
    x = a.data
    if exponent == 0.0:
        return _make(np.ones_like(x), (a,), lambda g: (np.zeros_like(g),), "pow")
    out = x ** exponent

    def vjp(g):
        local = exponent * x ** (exponent - 1.0)
        return (g * local,)

    return _make(out, (a,), vjp, "pow")


def exp(a):
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a):
    x = a.data
    return _make(np.log(x), (a,), lambda g: (g / x,), "log")


def relu(a):
    x = a.data
    mask = x > 0
    return _make(np.where(mask, x, 0).astype(x.dtype, copy=False), (a,),
                 lambda g: (g * mask,), "relu")


def gelu(a):
    """Exact (erf-based) GELU."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return _make(x * cdf, (a,), lambda g: (g * (cdf + x * pdf),), "gelu")


def sigmoid(a):
    out = 0.5 * (np.tanh(0.5 * a.data) + 1.0)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a):
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def clip(a, lo, hi):
    x = a.data
    inside = (x >= lo) & (x <= hi)
    return _make(np.clip(x, lo, hi), (a,), lambda g: (g * inside,), "clip")


def activation(name):
    """Map a config string to an activation function."""
    table = {"relu": relu, "gelu": gelu}
    if name not in table:
        raise ValueError(f"unknown activation {name!r}; expected one of {sorted(table)}")
    return table[name]


# ---------------------------------------------------------------- reductions


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def reduce_sum(a, axis=None, keepdims=False):
    shape = a.shape
    axes = _norm_axis(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(out, (a,), vjp, "sum")


def reduce_mean(a, axis=None, keepdims=False):
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return reduce_sum(a, axis, keepdims) * (1.0 / count)


def softmax(a, axis=-1):
    x = a.data
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (a,), vjp, "softmax")


# ---------------------------------------------------------------- linear algebra


def matmul(a, b):
    a = _lift(a)
    b = _lift(b, a)
    if a.ndim < 1 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    vector = ad.ndim == 1
    if vector:
        ad = ad[None, :]
    try:
        out = ad @ bd
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None

    def vjp(g):
        if vector:
            g = np.expand_dims(g, -2)
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        ga = _unbroadcast(ga, ad.shape)
        if vector:
            ga = ga.reshape(a.shape)
        return ga, _unbroadcast(gb, bd.shape)

    if vector:
        out = out[..., 0, :]
    return _make(out, (a, b), vjp, "matmul")


def reshape(a, shape):
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {old} as {tuple(shape)}") from None
    return _make(out, (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a, axes=None):
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,),
                 lambda g: (np.transpose(g, inverse),), "transpose")


def swapaxes(a, i, j):
    axes = list(range(a.ndim))
    axes[i], axes[j] = axes[j], axes[i]
    return transpose(a, tuple(axes))


# ---------------------------------------------------------------- structure


def _is_basic_index(index):
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis
               for i in items)


def getitem(a, index):
    shape, dtype = a.shape, a.dtype
    basic = _is_basic_index(index)

    def vjp(g):
        full = np.zeros(shape, dtype=dtype)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _make(a.data[index], (a,), vjp, "getitem")


def take(a, index, axis=0):
    """Gather rows of ``a`` along axis 0; repeated indices are allowed."""
    if axis != 0:
        raise ValueError("take only gathers along axis 0")
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= a.shape[0]):
        raise IndexError(f"take: index out of range for {a.shape[0]} rows")
    shape, dtype = a.shape, a.dtype

    def vjp(g):
        full = np.zeros(shape, dtype=dtype)
        kernels.scatter_add_rows(full, index, g)
        return (full,)

    return _make(a.data[index], (a,), vjp, "take")


def concat(tensors, axis=0):
    tensors = [_lift(t) for t in tensors]
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    ndim = tensors[0].ndim
    ax = axis % ndim
    for t in tensors[1:]:
        rest_a = tensors[0].shape[:ax] + tensors[0].shape[ax + 1:]
        rest_b = t.shape[:ax] + t.shape[ax + 1:]
        if t.ndim != ndim or rest_a != rest_b:
            raise ShapeError(f"concat: incompatible shapes {tensors[0].shape} and {t.shape}")
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _make(np.concatenate([t.data for t in tensors], axis=ax), tensors, vjp, "concat")


# ---------------------------------------------------------------- layers


def layer_norm(x, gain, bias, axis=-1, eps=1e-5):
    """Normalize ``x`` over one axis, then scale by ``gain`` and shift by ``bias``."""
    xd = x.data
    mu = xd.mean(axis=axis, keepdims=True)
    centered = xd - mu
    var = (centered * centered).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    gd, bd = gain.data, bias.data
    try:
        out = xhat * gd + bd
    except ValueError:
        raise ShapeError(f"layer_norm: gain {gain.shape} does not broadcast to {x.shape}") from None

    def vjp(g):
        dxhat = g * gd
        dx = inv * (dxhat - dxhat.mean(axis=axis, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=axis, keepdims=True))
        return dx, _unbroadcast(g * xhat, gd.shape), _unbroadcast(g, bd.shape)

    return _make(out, (x, gain, bias), vjp, "layer_norm")


def same_padding(kernel_size):
    """Zero padding (left, right) that keeps the temporal length at stride 1."""
    total = kernel_size - 1
    return total // 2, total - total // 2


def conv1d(x, weight, bias=None, padding="same"):
    """Stride-1 convolution (cross-correlation) of ``(B, C_in, L)`` input."""
    if x.ndim != 3 or weight.ndim != 3 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv1d: incompatible shapes {x.shape} and {weight.shape}")
    k = weight.shape[2]
    pad = same_padding(k) if padding == "same" else tuple(padding)
    if x.shape[2] + pad[0] + pad[1] < k:
        raise ShapeError(f"conv1d: kernel {k} longer than padded input {x.shape}")
    xd, wd = x.data, weight.data
    out = kernels.conv1d_forward(xd, wd, pad)
    parents = (x, weight)
    if bias is not None:
        out = out + bias.data[None, :, None]
        parents = (x, weight, bias)

    def vjp(g):
        gx, gw = kernels.conv1d_backward(xd, wd, pad, g)
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2))

    return _make(out, parents, vjp, "conv1d")


def global_avg_pool(x):
    """Mean over the trailing (time) axis: ``(B, C, L) -> (B, C)``."""
    return reduce_mean(x, axis=-1)
