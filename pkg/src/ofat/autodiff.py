"""Dense tensors with reverse-mode automatic differentiation.

The engine is deliberately small: float32 row-major arrays (float64 behind
a switch used by the gradient-check tests), a tape built from parent
pointers, and exactly the operations the encoder needs. Broadcasting in
binary elementwise ops is limited to the patterns the models use: equal
shapes, python scalars, a trailing [d] vector against [..., d], and a
column [t, 1] against [t, d].

Gradient correctness is enforced by :func:`finite_diff_check`, a central
finite-difference oracle that every differentiable op is tested against.
"""

from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractError, DimensionError

_DEFAULT_DTYPE = np.dtype(np.float32)
# Tape recording is per-thread: concurrent no-grad evaluations (search
# workers) must not disable gradients for anyone else.
_TLS = threading.local()


def _grad_enabled() -> bool:
    return getattr(_TLS, "grad_enabled", True)

_GELU_C0 = 0.7978845608028654  # sqrt(2/pi)
_GELU_C1 = 0.044715


def default_dtype() -> np.dtype:
    return _DEFAULT_DTYPE


def set_default_dtype(dtype) -> None:
    """Set the dtype new tensors are created with (float32 or float64)."""
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ContractError(f"unsupported dtype {dt}; use float32 or float64")
    _DEFAULT_DTYPE = dt


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the default dtype (the float64 verification mode)."""
    global _DEFAULT_DTYPE
    saved = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _DEFAULT_DTYPE = saved


@contextlib.contextmanager
def no_grad():
    """Disable tape recording in this thread (evaluation-only forwards)."""
    saved = _grad_enabled()
    _TLS.grad_enabled = False
    try:
        yield
    finally:
        _TLS.grad_enabled = saved


class Tensor:
    """A dense float array plus an optional gradient buffer.

    Tensors are immutable after creation apart from gradient accumulation.
    Results of ops on at least one requires_grad input carry the parent
    references and the vector-Jacobian product needed for backward().
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(_DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar root."""
        if self.size != 1:
            raise ContractError(f"backward() needs a scalar root, got shape {self.shape}")
        ComputeGraph.from_root(self).backward()

    # -- operator sugar ----------------------------------------------------

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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    def abs(self):
        return tabs(self)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self):
        return transpose(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"


@dataclass
class ComputeGraph:
    """Topologically ordered view of the tape reachable from one root."""

    nodes: list  # topological order: parents before children

    @classmethod
    def from_root(cls, root: Tensor) -> "ComputeGraph":
        order = []
        seen = set()
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
                if id(p) not in seen:
                    stack.append((p, False))
        return cls(order)

    def backward(self) -> None:
        """Visit every node exactly once in reverse topological order."""
        root = self.nodes[-1]
        root.grad = np.ones_like(root.data)
        for node in reversed(self.nodes):
            if node._vjp is None or node.grad is None:
                continue
            node._vjp(node.grad)


def _result(data: np.ndarray, parents, vjp) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    needs = _grad_enabled() and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    if needs:
        out._parents = tuple(parents)
        out._vjp = vjp
    else:
        out._parents = ()
        out._vjp = None
    return out


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not (t.requires_grad or t._vjp is not None):
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum g down to `shape` (inverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise ops -------------------------------------------------------
#
# Python scalars get a dedicated path so they never widen a float32 graph
# (wrapping them in a Tensor would make float64 0-d arrays).


def _py_scalar(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def add(a, b) -> Tensor:
    if _py_scalar(b) or _py_scalar(a):
        if _py_scalar(a):
            a, b = b, a
        a = _as_tensor(a)
        s = float(b)

        def vjp_s(g):
            _accum(a, g)

        return _result(a.data + s, (a,), vjp_s)
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data

    def vjp(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _result(data, (a, b), vjp)


def sub(a, b) -> Tensor:
    if _py_scalar(b):
        return add(a, -float(b))
    if _py_scalar(a):
        return add(neg(b), float(a))
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data - b.data

    def vjp(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _result(data, (a, b), vjp)


def mul(a, b) -> Tensor:
    if _py_scalar(b) or _py_scalar(a):
        if _py_scalar(a):
            a, b = b, a
        a = _as_tensor(a)
        s = float(b)

        def vjp_s(g):
            _accum(a, g * s)

        return _result(a.data * s, (a,), vjp_s)
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data

    def vjp(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _result(data, (a, b), vjp)


def div(a, b) -> Tensor:
    if _py_scalar(b):
        return mul(a, 1.0 / float(b))
    if _py_scalar(a):
        s = float(a)
        b = _as_tensor(b)
        data = s / b.data

        def vjp_s(g):
            _accum(b, -g * s / (b.data * b.data))

        return _result(data, (b,), vjp_s)
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data / b.data

    def vjp(g):
        _accum(a, _unbroadcast(g / b.data, a.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _result(data, (a, b), vjp)


def neg(a) -> Tensor:
    a = _as_tensor(a)

    def vjp(g):
        _accum(a, -g)

    return _result(-a.data, (a,), vjp)


def tabs(a) -> Tensor:
    a = _as_tensor(a)
    data = np.abs(a.data)

    def vjp(g):
        _accum(a, g * np.sign(a.data))

    return _result(data, (a,), vjp)


def tsum(a) -> Tensor:
    a = _as_tensor(a)
    data = np.asarray(a.data.sum())

    def vjp(g):
        _accum(a, np.broadcast_to(g, a.shape).copy())

    return _result(data, (a,), vjp)


def tmean(a) -> Tensor:
    a = _as_tensor(a)
    n = a.size
    data = np.asarray(a.data.sum() / n)

    def vjp(g):
        _accum(a, np.broadcast_to(g / n, a.shape).astype(a.dtype, copy=True))

    return _result(data, (a,), vjp)


# -- linear algebra --------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} vs {b.shape}")
    data = a.data @ b.data

    def vjp(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _result(data, (a, b), vjp)


def transpose(a) -> Tensor:
    a = _as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"transpose needs a 2-D tensor, got {a.shape}")

    def vjp(g):
        _accum(a, g.T)

    return _result(a.data.T.copy(), (a,), vjp)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    data = a.data.reshape(shape)

    def vjp(g):
        _accum(a, g.reshape(a.shape))

    return _result(data, (a,), vjp)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def vjp(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, g[tuple(idx)])

    return _result(data, tuple(tensors), vjp)


def slice_along(a, dim: int, start: int, stop: int) -> Tensor:
    """Contiguous slice along one dimension; backward scatters into place."""
    a = _as_tensor(a)
    if not (0 <= start <= stop <= a.shape[dim]):
        raise DimensionError(
            f"slice [{start}:{stop}] out of range for extent {a.shape[dim]} along dim {dim}"
        )
    idx = [slice(None)] * a.ndim
    idx[dim] = slice(start, stop)
    idx = tuple(idx)
    data = a.data[idx].copy()

    def vjp(g):
        if not (a.requires_grad or a._vjp is not None):
            return
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[idx] += g

    return _result(data, (a,), vjp)


def slice_prefix(a, dim: int, n: int) -> Tensor:
    """First n entries along dim; the nesting primitive for weight sharing."""
    a = _as_tensor(a)
    if not (0 <= n <= a.shape[dim]):
        raise DimensionError(f"prefix length {n} out of range for extent {a.shape[dim]} along dim {dim}")
    return slice_along(a, dim, 0, n)


# -- neural-net ops --------------------------------------------------------


def gelu_array(x: np.ndarray) -> np.ndarray:
    """GELU (tanh approximation) on a plain array; also the frontend activation."""
    inner = _GELU_C0 * (x + _GELU_C1 * (x * x * x))
    return 0.5 * x * (1.0 + np.tanh(inner))


def gelu(a) -> Tensor:
    a = _as_tensor(a)
    x = a.data
    t = np.tanh(_GELU_C0 * (x + _GELU_C1 * (x * x * x)))
    y = 0.5 * x * (1.0 + t)

    def vjp(g):
        # derivative from the saved tanh; no cost on no-grad forwards
        dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C0 * (1.0 + 3.0 * _GELU_C1 * (x * x))
        _accum(a, g * dy)

    return _result(y, (a,), vjp)


def softmax_lastdim(a) -> Tensor:
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        _accum(a, y * (g - dot))

    return _result(y, (a,), vjp)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Zero-mean unit-variance over the last dimension, then affine."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(
            f"layer_norm affine shapes {gain.shape}/{bias.shape} do not match feature dim {d}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    y = xhat * gain.data + bias.data

    def vjp(g):
        dxhat = g * gain.data
        # Standard layer-norm backward, folded:
        # dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        _accum(x, inv_std * (dxhat - m1 - xhat * m2))
        lead = tuple(range(g.ndim - 1))
        _accum(gain, (g * xhat).sum(axis=lead))
        _accum(bias, g.sum(axis=lead))

    return _result(y, (x, gain, bias), vjp)


def grouped_conv1d(x, weight, bias, groups: int) -> Tensor:
    """Grouped 1-D convolution over time with same-length output.

    x is [t, c]; weight is [c, c // groups, k] with odd k; bias is [c].
    Group g maps input channels [g*c/G, (g+1)*c/G) to the same output range.
    """
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    if x.ndim != 2:
        raise DimensionError(f"grouped_conv1d input must be [t, c], got {x.shape}")
    t, c = x.shape
    if c % groups != 0:
        raise ConfigurationError(f"channel count {c} not divisible by {groups} groups")
    cg = c // groups
    if weight.shape != (c, cg, weight.shape[2]):
        raise DimensionError(
            f"grouped_conv1d weight shape {weight.shape} does not match channels {c} with {groups} groups"
        )
    k = weight.shape[2]
    if k % 2 != 1:
        raise DimensionError(f"grouped_conv1d kernel must be odd, got {k}")
    if bias.shape != (c,):
        raise DimensionError(f"grouped_conv1d bias shape {bias.shape} does not match channels {c}")

    pad = k // 2
    xp = np.zeros((t + 2 * pad, c), dtype=x.dtype)
    xp[pad : pad + t] = x.data
    out = np.empty((t, c), dtype=np.result_type(x.dtype, weight.dtype, bias.dtype))
    windows_by_group = []
    for g_idx in range(groups):
        cols = slice(g_idx * cg, (g_idx + 1) * cg)
        win = np.lib.stride_tricks.sliding_window_view(xp[:, cols], k, axis=0)  # [t, cg, k]
        windows_by_group.append(win)
        out[:, cols] = np.tensordot(win, weight.data[cols], axes=([1, 2], [1, 2]))
    out += bias.data

    def vjp(g):
        dxp = np.zeros_like(xp)
        dw = np.zeros_like(weight.data)
        for g_idx in range(groups):
            cols = slice(g_idx * cg, (g_idx + 1) * cg)
            g_g = g[:, cols]  # [t, cg]
            dw[cols] = np.tensordot(g_g, windows_by_group[g_idx], axes=([0], [0]))
            w_g = weight.data[cols]  # [cg, cg, k]
            for kk in range(k):
                dxp[kk : kk + t, cols] += g_g @ w_g[:, :, kk]
        _accum(x, dxp[pad : pad + t])
        _accum(weight, dw)
        _accum(bias, g.sum(axis=0))

    return _result(out, (x, weight, bias), vjp)


# -- gradient oracle -------------------------------------------------------


def finite_diff_check(f, x: Tensor, h: float | None = None) -> float:
    """Max relative error between autodiff and central finite differences.

    f must map the tensor to a scalar Tensor and be a pure function of its
    argument. The numeric side evaluates f at float64-perturbed copies with
    a power-of-two step (default 2^-10, or 2^-20 when x is float64) so the
    probes stay exactly representable; the relative error uses an absolute
    floor of 1e-6 in the denominator.
    """
    if not x.requires_grad:
        raise ContractError("finite_diff_check needs a requires_grad tensor")
    if h is None:
        h = 2.0**-20 if x.dtype == np.float64 else 2.0**-10
    y = f(x)
    if not isinstance(y, Tensor) or y.size != 1:
        raise ContractError("finite_diff_check needs a scalar-valued function")
    x.zero_grad()
    y.backward()
    g_ad = np.zeros_like(x.data, dtype=np.float64) if x.grad is None else x.grad.astype(np.float64)

    base = x.data.astype(np.float64)
    g_fd = np.zeros_like(base)
    flat = base.reshape(-1)
    fd_flat = g_fd.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            probe = flat.copy()
            probe[i] = flat[i] + h
            fp = f(Tensor(probe.reshape(base.shape))).item()
            probe[i] = flat[i] - h
            fm = f(Tensor(probe.reshape(base.shape))).item()
            fd_flat[i] = (fp - fm) / (2.0 * h)

    denom = np.maximum(np.maximum(np.abs(g_ad), np.abs(g_fd)), 1e-6)
    return float((np.abs(g_ad - g_fd) / denom).max())
