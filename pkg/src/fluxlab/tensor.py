"""Dense float64 tensors with reverse-mode differentiation.

Every differentiable operation appends a node to the active :class:`Tape`;
insertion order is a valid topological order, so the backward sweep is a
single reverse pass over the node list. Tapes are thread-confined: ops look
up the innermost tape opened on the current thread, and distinct tapes may
run concurrently on distinct threads. Ops executed with no tape open are
plain forward evaluations and produce detached tensors.

All data is float64. Complex quantities (spectral convolution modes) are
carried as a leading real/imaginary axis of length 2.
"""

from __future__ import annotations

import math
import os
import threading

import numpy as np
from scipy.special import expit as _expit

from .exceptions import ConfigError, DomainError, ShapeError

_DEBUG_FINITE = os.environ.get("FLUXLAB_DEBUG_FINITE", "") in ("1", "true", "yes")


def set_debug_finite(enabled):
    """Globally toggle the post-op finiteness check (slow; for debugging)."""
    global _DEBUG_FINITE
    _DEBUG_FINITE = bool(enabled)


_LOCAL = threading.local()


def _tape_stack():
    stack = getattr(_LOCAL, "stack", None)
    if stack is None:
        stack = []
        _LOCAL.stack = stack
    return stack


def active_tape():
    """Innermost tape opened on this thread, or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class _Node:
    __slots__ = ("out", "inputs", "vjp")

    def __init__(self, out, inputs, vjp):
        self.out = out
        self.inputs = inputs
        self.vjp = vjp


class Tape:
    """Append-only record of differentiable ops executed under it.

    Use as a context manager::

        with Tape() as tape:
            loss = forward(...)
        loss.backward()

    ``backward`` accumulates into ``.grad`` of every *leaf* tensor created
    with ``requires_grad=True``; intermediate results never receive ``.grad``.
    """

    def __init__(self):
        self._nodes = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self, "tapes must be exited in LIFO order"
        return False

    def __len__(self):
        return len(self._nodes)

    def backward(self, loss):
        """Reverse sweep; single-shot - the tape is released afterwards.

        Gradient arrays land on the leaf tensors; all intermediate results
        and node closures are dropped so their memory returns immediately
        (node/tensor back-references would otherwise form cycles that wait
        for the garbage collector).
        """
        if loss.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
        grads = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self._nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            for t, ig in zip(node.inputs, node.vjp(g)):
                if ig is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + ig
                else:
                    grads[key] = ig
        # Whatever remains belongs to leaves (tensors without a producing node).
        for node in self._nodes:
            for t in node.inputs:
                g = grads.pop(id(t), None)
                if g is not None:
                    t.grad = g if t.grad is None else t.grad + g
        self.release()

    def release(self):
        """Drop all recorded nodes and break tensor<->node cycles."""
        for node in self._nodes:
            node.out._node = None
            node.inputs = ()
            node.vjp = None
        self._nodes.clear()


class Tensor:
    """A dense float64 array, optionally tracked on a tape."""

    __slots__ = ("data", "requires_grad", "grad", "_node")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._node = None

    # ----- introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def numpy(self):
        """The raw array backing this tensor (do not mutate tracked tensors)."""
        return self.data

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # ----- operators ------------------------------------------------------
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

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    # ----- conveniences ---------------------------------------------------
    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def backward(self):
        if self._node is None:
            raise ShapeError("backward called on a tensor with no recorded history")
        self._node.tape.backward(self)


# _Node needs a tape backlink for Tensor.backward; attach lazily to avoid a
# second class. (slot added here to keep _Node minimal above)
class _TapedNode(_Node):
    __slots__ = ("tape",)

    def __init__(self, out, inputs, vjp, tape):
        super().__init__(out, inputs, vjp)
        self.tape = tape


def as_tensor(x):
    """Coerce numbers/arrays to constant tensors; pass tensors through."""
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def constant(x):
    return as_tensor(x)


def param(rng, shape, scale=1.0):
    """Leaf tensor of N(0, scale^2) entries with requires_grad set."""
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)


def zeros(shape, requires_grad=False):
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def ones(shape, requires_grad=False):
    return Tensor(np.ones(shape), requires_grad=requires_grad)


def _record(out_data, inputs, vjp):
    """Wrap op output; append a tape node when gradients are needed."""
    if _DEBUG_FINITE and not np.all(np.isfinite(out_data)):
        raise FloatingPointError("non-finite values produced by a forward op")
    tape = active_tape()
    if tape is None or not any(t.requires_grad for t in inputs):
        return Tensor(out_data)
    out = Tensor(out_data, requires_grad=True)
    node = _TapedNode(out, tuple(inputs), vjp, tape)
    out._node = node
    tape._nodes.append(node)
    return out


def _unbroadcast(g, shape):
    """Sum g down to `shape` (adjoint of NumPy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# --------------------------------------------------------------------------
# pointwise ops
# --------------------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(out, (a, b), vjp)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(out, (a, b), vjp)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data
    ad, bd = a.data, b.data

    def vjp(g):
        return _unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)

    return _record(out, (a, b), vjp)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    ad, bd = a.data, b.data

    def vjp(g):
        return _unbroadcast(g / bd, a.shape), _unbroadcast(-g * ad / (bd * bd), b.shape)

    return _record(out, (a, b), vjp)


def neg(a):
    a = as_tensor(a)

    def vjp(g):
        return (-g,)

    return _record(-a.data, (a,), vjp)


def power(a, p):
    """Elementwise a**p for a scalar (python float) exponent."""
    a = as_tensor(a)
    p = float(p)
    if p != int(p) and np.any(a.data < 0):
        raise DomainError(f"power with non-integer exponent {p} on negative base")
    out = a.data ** p
    ad = a.data

    def vjp(g):
        return (g * p * ad ** (p - 1.0),)

    return _record(out, (a,), vjp)


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)

    def vjp(g):
        return (g * out,)

    return _record(out, (a,), vjp)


def log(a):
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("log of non-positive value")
    out = np.log(a.data)
    ad = a.data

    def vjp(g):
        return (g / ad,)

    return _record(out, (a,), vjp)


def sqrt(a):
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt of negative value")
    out = np.sqrt(a.data)

    def vjp(g):
        return (g * 0.5 / out,)

    return _record(out, (a,), vjp)


def clamp_min(a, floor):
    """max(a, floor) with gradient passing only where a > floor."""
    a = as_tensor(a)
    floor = float(floor)
    mask = a.data > floor
    out = np.where(mask, a.data, floor)

    def vjp(g):
        return (g * mask,)

    return _record(out, (a,), vjp)


def sigmoid(a):
    a = as_tensor(a)
    out = _expit(a.data)

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _record(out, (a,), vjp)


_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_K = 0.044715


def gelu(a):
    """GELU, tanh approximation (erf is several times slower at this scale)."""
    a = as_tensor(a)
    ad = a.data
    inner = _GELU_C * (ad + _GELU_K * (ad * ad * ad))
    th = np.tanh(inner)
    out = 0.5 * ad * (1.0 + th)

    def vjp(g):
        # deriv = 0.5 (1 + th) + 0.5 ad (1 - th^2) (c (1 + 3 k ad^2))
        sech2 = th * th
        np.subtract(1.0, sech2, out=sech2)
        dinner = ad * ad
        dinner *= 3.0 * _GELU_K
        dinner += 1.0
        dinner *= _GELU_C
        sech2 *= dinner
        sech2 *= ad
        sech2 += 1.0
        sech2 += th
        sech2 *= 0.5
        sech2 *= g
        return (sech2,)

    return _record(out, (a,), vjp)


# --------------------------------------------------------------------------
# reductions
# --------------------------------------------------------------------------

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)
    shape = a.shape

    def vjp(g):
        if not keepdims:
            kshape = list(shape)
            for ax in axes:
                kshape[ax] = 1
            g = g.reshape(kshape)
        return (np.broadcast_to(g, shape).copy(),)

    return _record(out, (a,), vjp)


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    count = 1
    for ax in axes:
        count *= a.shape[ax]
    out = a.data.mean(axis=axes, keepdims=keepdims)
    shape = a.shape

    def vjp(g):
        if not keepdims:
            kshape = list(shape)
            for ax in axes:
                kshape[ax] = 1
            g = g.reshape(kshape)
        return (np.broadcast_to(g / count, shape).copy(),)

    return _record(out, (a,), vjp)


# --------------------------------------------------------------------------
# shape ops
# --------------------------------------------------------------------------

def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    out = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(old),)

    return _record(out, (a,), vjp)


def transpose(a, axes):
    a = as_tensor(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = a.data.transpose(axes)

    def vjp(g):
        return (g.transpose(inv),)

    return _record(out, (a,), vjp)


def swap_last2(a):
    a = as_tensor(a)
    axes = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2)
    return transpose(a, axes)


def roll(a, shift, axis):
    a = as_tensor(a)
    out = np.roll(a.data, shift, axis=axis)

    def vjp(g):
        return (np.roll(g, -shift, axis=axis),)

    return _record(out, (a,), vjp)


def getitem(a, idx):
    """Basic slicing only (ints/slices/Ellipsis); adjoint scatters into zeros."""
    a = as_tensor(a)
    out = a.data[idx]
    shape = a.shape

    def vjp(g):
        buf = np.zeros(shape)
        buf[idx] = g
        return (buf,)

    return _record(np.ascontiguousarray(out), (a,), vjp)


def concat(tensors, axis):
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(out, tuple(tensors), vjp)


def stack(tensors, axis):
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _record(out, tuple(tensors), vjp)


# --------------------------------------------------------------------------
# linear algebra
# --------------------------------------------------------------------------

def matmul(a, b):
    """np.matmul semantics with broadcast batch dims; 1-D operands promoted."""
    a, b = as_tensor(a), as_tensor(b)
    a_vec = a.ndim == 1
    b_vec = b.ndim == 1
    ad = a.data[None, :] if a_vec else a.data
    bd = b.data[:, None] if b_vec else b.data
    if ad.shape[-1] != bd.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    try:
        out = np.matmul(ad, bd)
    except ValueError as e:
        raise ShapeError(f"matmul batch dims incompatible: {a.shape} @ {b.shape}") from e
    a_shape, b_shape = a.shape, b.shape

    def vjp(g):
        if a_vec and b_vec:
            g = g.reshape(1, 1)
        elif a_vec:
            g = g.reshape(g.shape[:-1] + (1, g.shape[-1]))
        elif b_vec:
            g = g.reshape(g.shape + (1,))
        ga = gb = None
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(bd, -1, -2))
            if a_vec:
                ga = ga.reshape(ga.shape[:-2] + (ga.shape[-1],))
            ga = _unbroadcast(ga, a_shape)
        if b.requires_grad:
            # Shared 2-D weight against a batched operand: one flat GEMM
            # instead of a batched product followed by a reduction.
            if bd.ndim == 2 and ad.ndim > 2:
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = np.matmul(np.swapaxes(ad, -1, -2), g)
                gb = _unbroadcast(gb, bd.shape)
            if b_vec:
                gb = gb.reshape(gb.shape[:-2] + (gb.shape[-2],))
            gb = _unbroadcast(gb, b_shape)
        return ga, gb

    if a_vec and b_vec:
        out = out.reshape(())
    elif a_vec:
        out = out.reshape(out.shape[:-2] + (out.shape[-1],))
    elif b_vec:
        out = out.reshape(out.shape[:-1])
    return _record(out, (a, b), vjp)


def softmax(a, axis=-1):
    a = as_tensor(a)
    x = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(x)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _record(out, (a,), vjp)


def layer_norm(x, gain, bias, eps=1e-6):
    """Normalize the last axis to zero mean / unit variance, then affine."""
    if eps <= 0:
        raise DomainError("layer_norm requires eps > 0")
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data
    n = x.shape[-1]
    gd = gain.data

    def vjp(g):
        dgain = _unbroadcast(g * xhat, gain.shape)
        dbias = _unbroadcast(g, bias.shape)
        dxhat = g * gd
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        return dx, dgain, dbias

    return _record(out, (x, gain, bias), vjp)


def softmax_attention(q, k, v):
    """Scaled dot-product attention over the last two axes [..., P, e_h]."""
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.shape != k.shape or q.shape[:-2] + (k.shape[-2],) != v.shape[:-1]:
        raise ShapeError(
            f"attention shapes mismatch: q{q.shape} k{k.shape} v{v.shape}"
        )
    scale = 1.0 / math.sqrt(q.shape[-1])
    scores = mul(matmul(q, swap_last2(k)), scale)
    attn = softmax(scores, axis=-1)
    return matmul(attn, v)


# --------------------------------------------------------------------------
# convolutions
# --------------------------------------------------------------------------

def causal_depthwise_conv1d(x, kernel):
    """Depthwise conv along the second-to-last axis with left zero padding.

    x: [..., k, e], kernel: [e, w_t]. Output at time t mixes inputs at times
    t-w_t+1 .. t only; kernel[:, -1] is the tap on the current step.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if kernel.ndim != 2 or kernel.shape[0] != x.shape[-1]:
        raise ShapeError(f"conv kernel {kernel.shape} does not match channels {x.shape}")
    xd, kd = x.data, kernel.data
    k_len = xd.shape[-2]
    w_t = kd.shape[1]
    out = np.zeros_like(xd)
    for tau in range(w_t):
        lag = w_t - 1 - tau
        if lag >= k_len:
            continue
        if lag == 0:
            out += kd[:, tau] * xd
        else:
            out[..., lag:, :] += kd[:, tau] * xd[..., :-lag, :]

    def vjp(g):
        gx = np.zeros_like(xd)
        gk = np.zeros_like(kd)
        lead = tuple(range(g.ndim - 2))
        for tau in range(w_t):
            lag = w_t - 1 - tau
            if lag >= k_len:
                continue
            if lag == 0:
                gx += kd[:, tau] * g
                gk[:, tau] = (g * xd).sum(axis=lead + (g.ndim - 2,))
            else:
                gx[..., :-lag, :] += kd[:, tau] * g[..., lag:, :]
                gk[:, tau] = (g[..., lag:, :] * xd[..., :-lag, :]).sum(
                    axis=lead + (g.ndim - 2,)
                )
        return gx, gk

    return _record(out, (x, kernel), vjp)


def circular_spectral_conv(z, modes):
    """Channel-mixing circular convolution with M retained Fourier modes.

    z: [..., w_in, N] real. modes: [2, w_out, w_in, M] (real/imag parts) or
    [..., 2, w_out, w_in, M] with leading dims matching z for per-sample
    kernels. N must be even; M <= N//2 + 1. Exactly shift-equivariant along
    the spatial axis.
    """
    z, modes = as_tensor(z), as_tensor(modes)
    n = z.shape[-1]
    m = modes.shape[-1]
    if n % 2 != 0:
        raise DomainError(f"spectral conv requires even spatial size, got {n}")
    if m > n // 2 + 1:
        raise ConfigError(f"modes M={m} exceeds N//2+1={n // 2 + 1}")
    if modes.shape[-4] != 2:
        raise ShapeError(f"modes must carry a leading re/im axis of 2: {modes.shape}")
    if modes.shape[-2] != z.shape[-2]:
        raise ShapeError(
            f"modes input-channel dim {modes.shape[-2]} != z channels {z.shape[-2]}"
        )
    batched_modes = modes.ndim > 4
    if batched_modes and modes.shape[:-4] != z.shape[:-2]:
        raise ShapeError(
            f"batch dims differ: modes {modes.shape[:-4]} vs z {z.shape[:-2]}"
        )

    zd, md = z.data, modes.data
    f = n // 2 + 1
    zf = np.fft.rfft(zd, axis=-1)  # [..., w_in, F]
    w = md[..., 0, :, :, :] + 1j * md[..., 1, :, :, :]  # [..., w_out, w_in, M]
    if batched_modes:
        ym = np.einsum("...oim,...im->...om", w, zf[..., :m])
    else:
        ym = np.einsum("oim,...im->...om", w, zf[..., :m])
    w_out = w.shape[-3]
    yf = np.zeros(zd.shape[:-2] + (w_out, f), dtype=complex)
    yf[..., :m] = ym
    out = np.fft.irfft(yf, n=n, axis=-1)

    # irfft adjoint scale: middle bins appear twice in the real signal.
    scale = np.full(f, 2.0 / n)
    scale[0] = 1.0 / n
    scale[-1] = 1.0 / n
    adjust = np.full(f, 0.5)
    adjust[0] = 1.0
    adjust[-1] = 1.0

    def vjp(g):
        gy = np.fft.rfft(g, axis=-1) * scale  # grad wrt Y (re/im pairing)
        gym = gy[..., :m]
        if batched_modes:
            gw = np.einsum("...om,...im->...oim", gym, np.conj(zf[..., :m]))
            gz_m = np.einsum("...om,...oim->...im", gym, np.conj(w))
        else:
            gw = np.einsum("...om,...im->oim", gym, np.conj(zf[..., :m]))
            gz_m = np.einsum("...om,oim->...im", gym, np.conj(w))
        gmodes = np.stack([gw.real, gw.imag], axis=-4)
        gzf = np.zeros(zd.shape[:-1] + (f,), dtype=complex)
        gzf[..., :m] = gz_m
        gz = n * np.fft.irfft(gzf * adjust, n=n, axis=-1)
        return gz, gmodes

    return _record(out, (z, modes), vjp)
