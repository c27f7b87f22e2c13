"""Minimal reverse-mode automatic differentiation over numpy arrays.

Every primitive records its parents and a closure mapping the output
gradient to one gradient per parent.  ``backward`` walks the graph in
reverse creation order, so each node is visited once.

Storage is float32 by default; ops keep the dtype of their inputs, which
lets the finite-difference checks run the same code in float64.
"""

from __future__ import annotations

import contextlib
import itertools
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import special

DEFAULT_DTYPE = np.float32

_grad_enabled = True
_counter = itertools.count()


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class NumericAbort(FloatingPointError):
    """A NaN or Inf appeared where finite values are required."""


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled():
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_order", "name")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self._order = next(_counter)
        self.name = name

    # -- basic properties ---------------------------------------------------
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
        return float(self.data)

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self):
        return self.shape[0]

    def backward(self, params=None):
        backward(self, params)

    # -- operator sugar -----------------------------------------------------
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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype if dtype is not None else DEFAULT_DTYPE))


def _make(data, parents, backward_fn):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _pair(a, b):
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    elif not isinstance(a, Tensor):
        a, b = as_tensor(a), as_tensor(b)
    return a, b


# -- elementwise ---------------------------------------------------------------

def add(a, b):
    a, b = _pair(a, b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = _pair(a, b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = _pair(a, b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b):
    a, b = _pair(a, b)
    out = a.data / b.data
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)))


def neg(a):
    return _make(-a.data, (a,), lambda g: (-g,))


def power(a, exponent):
    if isinstance(exponent, Tensor):
        raise TypeError("only scalar exponents are supported")
    exponent = float(exponent)
    out = a.data ** exponent
    return _make(out, (a,), lambda g: (g * exponent * a.data ** (exponent - 1.0),))


def square(a):
    return _make(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def sqrt(a):
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (0.5 * g / out,))


def exp(a):
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a):
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def softplus(a):
    out = np.logaddexp(0.0, a.data).astype(a.dtype)
    return _make(out, (a,), lambda g: (g * special.expit(a.data).astype(a.dtype),))


def erf(a):
    out = special.erf(a.data).astype(a.dtype, copy=False)
    c = a.dtype.type(2.0 / math.sqrt(math.pi))
    return _make(out, (a,), lambda g: (g * c * np.exp(-a.data * a.data),))


def erfc(a):
    out = special.erfc(a.data).astype(a.dtype, copy=False)
    c = a.dtype.type(-2.0 / math.sqrt(math.pi))
    return _make(out, (a,), lambda g: (g * c * np.exp(-a.data * a.data),))


def absolute(a):
    sign = np.sign(a.data)
    return _make(np.abs(a.data), (a,), lambda g: (g * sign,))


def leaky_relu(a, slope=0.2):
    mask = a.data > 0
    scale = np.where(mask, a.dtype.type(1.0), a.dtype.type(slope))
    return _make(a.data * scale, (a,), lambda g: (g * scale,))


def clamp_min(a, lo):
    mask = a.data >= lo
    return _make(np.where(mask, a.data, a.dtype.type(lo)), (a,), lambda g: (g * mask,))


def round_ste(a):
    """Round half away from zero with an identity gradient."""
    out = np.sign(a.data) * np.floor(np.abs(a.data) + 0.5)
    return _make(out.astype(a.dtype), (a,), lambda g: (g,))


# -- reductions and shape ------------------------------------------------------

def tsum(a, axis=None, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=True),)

    return _make(np.asarray(out, dtype=a.dtype), (a,), bw)


def mean(a, axis=None, keepdims=False):
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([a.shape[i] for i in axes]))
    return tsum(a, axis, keepdims) * (1.0 / n)


def reshape(a, shape):
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None):
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors),
                 lambda g: tuple(np.split(g, splits, axis=axis)))


def matmul(a, b):
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul needs operands with at least 2 dimensions")

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.data @ b.data, (a, b), bw)


def softmax(a, axis=-1):
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (a,), bw)


# -- convolution ---------------------------------------------------------------

def _windows(x, k, stride, padding):
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def _conv_forward(x, w, stride, padding):
    win = _windows(x, w.shape[2], stride, padding)
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def _conv_input_grad(gy, w, stride, padding, in_hw):
    n, _, ho, wo = gy.shape
    c, k = w.shape[1], w.shape[2]
    hp, wp = in_hw[0] + 2 * padding, in_hw[1] + 2 * padding
    cols = np.tensordot(gy, w, axes=([1], [0]))  # n, ho, wo, c, k, k
    cols = cols.transpose(0, 3, 1, 2, 4, 5)
    dx = np.zeros((n, c, hp, wp), dtype=gy.dtype)
    for i in range(k):
        for j in range(k):
            dx[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += cols[..., i, j]
    if padding:
        dx = dx[:, :, padding:hp - padding, padding:wp - padding]
    return np.ascontiguousarray(dx)


def _conv_weight_grad(x, gy, k, stride, padding):
    win = _windows(x, k, stride, padding)
    ho, wo = gy.shape[2], gy.shape[3]
    win = win[:, :, :ho, :wo]
    return np.tensordot(gy, win, axes=([0, 2, 3], [0, 2, 3]))


def conv_output_size(n, k, stride, padding):
    return (n + 2 * padding - k) // stride + 1


def conv2d(x, w, bias=None, stride=1, padding=0):
    """Cross-correlation of ``x`` [N,C,H,W] with ``w`` [O,C,k,k]."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and kernel, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"input has {x.shape[1]} channels, kernel expects {w.shape[1]}")
    if w.shape[2] != w.shape[3]:
        raise ShapeError("only square kernels are supported")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    k = w.shape[2]
    h, wd = x.shape[2], x.shape[3]
    if k > h + 2 * padding or k > wd + 2 * padding:
        raise ShapeError(f"kernel {k} larger than padded input {h + 2 * padding}x{wd + 2 * padding}")
    out = _conv_forward(x.data, w.data, stride, padding)

    def bw(g):
        return (_conv_input_grad(g, w.data, stride, padding, (h, wd)),
                _conv_weight_grad(x.data, g, k, stride, padding))

    y = _make(out, (x, w), bw)
    if bias is not None:
        y = y + reshape(bias, (1, -1, 1, 1))
    return y


def conv2d_transpose(x, w, bias=None, stride=1, padding=0):
    """Adjoint of ``conv2d`` w.r.t. its input; ``w`` is [C_in, C_out, k, k].

    The kernel layout matches the conv2d it transposes: a conv2d with kernel
    ``w`` maps C_out channels to C_in, so this op maps C_in back to C_out.
    """
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d_transpose expects 4-d input and kernel, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"input has {x.shape[1]} channels, kernel expects {w.shape[0]}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    k = w.shape[2]
    h, wd = x.shape[2], x.shape[3]
    out_hw = ((h - 1) * stride - 2 * padding + k, (wd - 1) * stride - 2 * padding + k)
    if out_hw[0] < 1 or out_hw[1] < 1:
        raise ShapeError("transposed convolution output would be empty")
    out = _conv_input_grad(x.data, w.data, stride, padding, out_hw)

    def bw(g):
        return (_conv_forward(g, w.data, stride, padding),
                _conv_weight_grad(g, x.data, k, stride, padding))

    y = _make(out, (x, w), bw)
    if bias is not None:
        y = y + reshape(bias, (1, -1, 1, 1))
    return y


# -- graph traversal -----------------------------------------------------------

def _topo(root):
    seen = set()
    order = []
    stack = [root]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        order.append(node)
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append(p)
    # creation order is a valid topological order of an acyclic graph
    order.sort(key=lambda t: t._order, reverse=True)
    return order


def backward(loss, params=None):
    """Populate ``.grad`` of every leaf reachable from scalar ``loss``.

    Parameters listed in ``params`` that the loss does not depend on get an
    explicit zero gradient.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not np.isfinite(loss.data).all():
        raise NumericAbort(f"non-finite loss {loss.data!r}")
    grads = {id(loss): np.ones_like(loss.data)}
    if loss.requires_grad:
        for node in _topo(loss):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if not parent.requires_grad or pg is None:
                    continue
                pg = np.asarray(pg, dtype=parent.dtype)
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg
    if params is not None:
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)


def check_finite(t, where=""):
    arr = t.data if isinstance(t, Tensor) else np.asarray(t)
    if not np.isfinite(arr).all():
        raise NumericAbort(f"non-finite values {where}".strip())


def gradcheck(fn, inputs, eps=1e-6, seed=0):
    """Compare autodiff and central-difference gradients of ``sum(fn * probe)``.

    ``inputs`` are numpy arrays (converted to float64).  Returns the largest
    relative error ``||analytic - numeric|| / max(||analytic||, ||numeric||)``
    over all inputs.
    """
    rng = np.random.default_rng(seed)
    arrays = [np.array(x, dtype=np.float64) for x in inputs]
    probe = None

    def scalar(arrs, track):
        nonlocal probe
        ts = [Tensor(a, requires_grad=track, dtype=np.float64) for a in arrs]
        out = fn(*ts)
        if probe is None:
            probe = rng.standard_normal(out.shape)
        return sum_all(mul(out, Tensor(probe, dtype=np.float64))), ts

    loss, ts = scalar(arrays, True)
    backward(loss, ts)
    worst = 0.0
    for idx, arr in enumerate(arrays):
        numeric = np.zeros_like(arr)
        flat = arr.reshape(-1)
        nflat = numeric.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            with no_grad():
                fp = scalar(arrays, False)[0].item()
            flat[j] = orig - eps
            with no_grad():
                fm = scalar(arrays, False)[0].item()
            flat[j] = orig
            nflat[j] = (fp - fm) / (2 * eps)
        analytic = ts[idx].grad
        denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
        worst = max(worst, float(np.linalg.norm(analytic - numeric) / denom))
    return worst


def sum_all(a):
    return tsum(a)
