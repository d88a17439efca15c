"""Differentiable primitives.

Every function takes :class:`Tensor` operands (plain arrays and Python
scalars are wrapped as constants) and records its backward rule on the
active tape. Broadcasting is limited to scalar operands and trailing-axis
bias addition; anything else raises :class:`ShapeError`.
"""
from __future__ import annotations

import math

import numpy as np

from . import kernels
from .tensor import Tensor, make_result


class ShapeError(ValueError):
    """Operand shapes are incompatible for the named operation."""


def _wrap(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype) if dtype is not None else x)


def _pair(a, b):
    if isinstance(a, Tensor):
        return a, _wrap(b, a)
    b = _wrap(b)
    return _wrap(a, b), b


def _is_suffix(short: tuple, long: tuple) -> bool:
    return len(short) <= len(long) and long[len(long) - len(short):] == short


def _result_shape(op: str, sa: tuple, sb: tuple) -> tuple:
    if sa == sb:
        return sa
    if _is_suffix(sb, sa):
        return sa
    if _is_suffix(sa, sb):
        return sb
    raise ShapeError(f"{op}: incompatible shapes {sa} and {sb} (only scalar or trailing-axis broadcasting)")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    if len(shape) == 0:
        return np.asarray(g.sum(), dtype=g.dtype)
    return g.reshape((-1,) + shape).sum(axis=0)


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _result_shape("add", a.shape, b.shape)
    sa, sb = a.shape, b.shape

    def back(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return make_result("add", (a, b), a.data + b.data, back)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _result_shape("sub", a.shape, b.shape)
    sa, sb = a.shape, b.shape

    def back(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return make_result("sub", (a, b), a.data - b.data, back)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _result_shape("mul", a.shape, b.shape)
    ad, bd = a.data, b.data

    def back(g):
        return (_unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(g * ad, bd.shape) if b.requires_grad else None)

    return make_result("mul", (a, b), ad * bd, back)


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    _result_shape("div", a.shape, b.shape)
    ad, bd = a.data, b.data
    out = ad / bd

    def back(g):
        return (_unbroadcast(g / bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None)

    return make_result("div", (a, b), out, back)


def neg(x) -> Tensor:
    x = _wrap(x)
    return make_result("neg", (x,), -x.data, lambda g: (-g,))


def exp(x) -> Tensor:
    x = _wrap(x)
    out = np.exp(x.data)
    return make_result("exp", (x,), out, lambda g: (g * out,))


def log(x) -> Tensor:
    x = _wrap(x)
    xd = x.data
    return make_result("log", (x,), np.log(xd), lambda g: (g / xd,))


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(x) -> Tensor:
    x = _wrap(x)
    s = _sigmoid(x.data)
    return make_result("sigmoid", (x,), s, lambda g: (g * s * (1.0 - s),))


def swish(x) -> Tensor:
    x = _wrap(x)
    xd = x.data
    s = _sigmoid(xd)
    return make_result("swish", (x,), xd * s, lambda g: (g * (s + xd * s * (1.0 - s)),))


def prelu(x, slope, axis: int = 1) -> Tensor:
    """Parametric ReLU with one learnable slope per entry of ``axis``."""
    x, slope = _wrap(x), _wrap(slope)
    axis = axis % x.ndim
    if slope.ndim != 1 or slope.shape[0] != x.shape[axis]:
        raise ShapeError(f"prelu: slope shape {slope.shape} does not match axis {axis} of {x.shape}")
    view = [1] * x.ndim
    view[axis] = -1
    a = slope.data.reshape(view)
    xd = x.data
    pos = xd > 0
    reduce_axes = tuple(i for i in range(x.ndim) if i != axis)

    def back(g):
        gx = np.where(pos, g, a * g) if x.requires_grad else None
        ga = np.where(pos, 0.0, g * xd).sum(axis=reduce_axes).astype(g.dtype) if slope.requires_grad else None
        return gx, ga

    return make_result("prelu", (x, slope), np.where(pos, xd, a * xd), back)


def glu(x, axis: int = -1) -> Tensor:
    """Gated linear unit: first half of ``axis`` gated by sigmoid of the second."""
    x = _wrap(x)
    axis = axis % x.ndim
    n = x.shape[axis]
    if n % 2:
        raise ShapeError(f"glu: axis {axis} of shape {x.shape} has odd length")
    a, b = np.split(x.data, 2, axis=axis)
    s = _sigmoid(b)

    def back(g):
        return (np.concatenate([g * s, g * a * s * (1.0 - s)], axis=axis),)

    return make_result("glu", (x,), a * s, back)


def softmax(x, axis: int = -1) -> Tensor:
    x = _wrap(x)
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax: axis {axis} out of range for shape {x.shape}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_result("softmax", (x,), y, back)


# ---------------------------------------------------------------------------
# shape manipulation and reductions
# ---------------------------------------------------------------------------

def reshape(x, shape) -> Tensor:
    x = _wrap(x)
    src = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot reshape {src} to {tuple(shape)}") from exc
    return make_result("reshape", (x,), out, lambda g: (g.reshape(src),))


def transpose(x, axes) -> Tensor:
    x = _wrap(x)
    axes = tuple(axes)
    if sorted(a % x.ndim for a in axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for shape {x.shape}")
    inverse = tuple(np.argsort([a % x.ndim for a in axes]))
    return make_result("transpose", (x,), x.data.transpose(axes), lambda g: (g.transpose(inverse),))


def broadcast_to(x, shape) -> Tensor:
    """Explicit numpy-rule broadcast; the only way to expand non-trailing axes."""
    x = _wrap(x)
    shape = tuple(shape)
    src = x.shape
    try:
        out = np.broadcast_to(x.data, shape)
    except ValueError as exc:
        raise ShapeError(f"broadcast_to: cannot broadcast {src} to {shape}") from exc
    lead = len(shape) - len(src)
    ones = tuple(i + lead for i, n in enumerate(src) if n == 1 and shape[i + lead] != 1)

    def back(g):
        g = g.sum(axis=tuple(range(lead)) + ones, keepdims=True) if (lead or ones) else g
        return (g.reshape(src),)

    return make_result("broadcast_to", (x,), np.ascontiguousarray(out), back)


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001 - mirrors numpy
    x = _wrap(x)
    src = x.shape

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return make_result("sum", (x,), np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), back)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _wrap(x)
    if axis is None:
        n = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = math.prod(x.shape[a] for a in axes)
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: no tensors given")
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError(f"concat: shapes {ref} and {t.shape} differ off axis {axis}")
    sizes = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def back(g):
        return tuple(np.split(g, sizes, axis=ax))

    return make_result("concat", tuple(tensors), np.concatenate([t.data for t in tensors], axis=ax), back)


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


def getitem(x, idx) -> Tensor:
    x = _wrap(x)
    src, dtype = x.shape, x.dtype
    basic = _is_basic_index(idx)

    def back(g):
        gx = np.zeros(src, dtype=dtype)
        if basic:
            gx[idx] += g
        else:
            np.add.at(gx, idx, g)
        return (gx,)

    return make_result("getitem", (x,), np.array(x.data[idx]), back)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    shared_b = b.ndim == 2 and a.ndim > 2
    if not shared_b and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: batch dimensions differ, {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def back(g):
        ga = np.matmul(g, np.swapaxes(bd, -1, -2)) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            if shared_b:
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = np.matmul(np.swapaxes(ad, -1, -2), g)
        return ga, gb

    return make_result("matmul", (a, b), np.matmul(ad, bd), back)


def linear(x, weight, bias=None) -> Tensor:
    """Affine map over the last axis: ``x @ weight.T + bias``."""
    x, weight = _pair(x, weight)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    inputs = (x, weight) if bias is None else (x, weight, _wrap(bias, x))
    if bias is not None and inputs[2].shape != (weight.shape[0],):
        raise ShapeError(f"linear: bias {inputs[2].shape} does not match weight {weight.shape}")
    xd, wd = x.data, weight.data
    out = xd @ wd.T
    if bias is not None:
        out = out + inputs[2].data

    def back(g):
        g2 = g.reshape(-1, g.shape[-1])
        grads = [g @ wd if x.requires_grad else None,
                 g2.T @ xd.reshape(-1, xd.shape[-1]) if weight.requires_grad else None]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    return make_result("linear", inputs, out, back)


def pointwise_conv1d(x, weight, bias=None) -> Tensor:
    """1x1 convolution on (B, C_in, N) with weight (C_out, C_in)."""
    x, weight = _pair(x, weight)
    if x.ndim != 3 or weight.ndim != 2 or weight.shape[1] != x.shape[1]:
        raise ShapeError(f"pointwise_conv1d: input {x.shape} incompatible with weight {weight.shape}")
    inputs = (x, weight) if bias is None else (x, weight, _wrap(bias, x))
    xd, wd = x.data, weight.data
    out = np.matmul(wd, xd)
    if bias is not None:
        out += inputs[2].data[:, None]

    def back(g):
        grads = [np.matmul(wd.T, g) if x.requires_grad else None,
                 np.tensordot(g, xd, axes=([0, 2], [0, 2])) if weight.requires_grad else None]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2)))
        return tuple(grads)

    return make_result("pointwise_conv1d", inputs, out, back)


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def _norm_backward(g, xhat, rstd, gain_view, axes):
    gxhat = g * gain_view
    m1 = gxhat.mean(axis=axes, keepdims=True)
    m2 = (gxhat * xhat).mean(axis=axes, keepdims=True)
    return rstd * (gxhat - m1 - xhat * m2)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis with population variance."""
    x, gain = _pair(x, gain)
    bias = _wrap(bias, x)
    c = x.shape[-1]
    if gain.shape != (c,) or bias.shape != (c,):
        raise ShapeError(f"layer_norm: gain {gain.shape}/bias {bias.shape} do not match last axis of {x.shape}")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * rstd
    lead = tuple(range(x.ndim - 1))

    def back(g):
        gx = _norm_backward(g, xhat, rstd, gain.data, -1) if x.requires_grad else None
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return make_result("layer_norm", (x, gain, bias), xhat * gain.data + bias.data, back)


def instance_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Per-(item, channel) normalization over the two trailing axes of (B, C, H, W)."""
    x, gain = _pair(x, gain)
    bias = _wrap(bias, x)
    if x.ndim != 4:
        raise ShapeError(f"instance_norm: expected (B, C, H, W), got {x.shape}")
    c = x.shape[1]
    if gain.shape != (c,) or bias.shape != (c,):
        raise ShapeError(f"instance_norm: gain {gain.shape}/bias {bias.shape} do not match channels of {x.shape}")
    xd = x.data
    axes = (2, 3)
    mu = xd.mean(axis=axes, keepdims=True)
    xc = xd - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(axis=axes, keepdims=True) + eps)
    xhat = xc * rstd
    gview = gain.data[None, :, None, None]
    out = xhat * gview + bias.data[None, :, None, None]

    def back(g):
        gx = _norm_backward(g, xhat, rstd, gview, axes) if x.requires_grad else None
        return gx, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return make_result("instance_norm", (x, gain, bias), out, back)


# ---------------------------------------------------------------------------
# convolutions
# ---------------------------------------------------------------------------

def _as_pair(v, name):
    if isinstance(v, (int, np.integer)):
        return int(v), int(v)
    v = tuple(int(i) for i in v)
    if len(v) != 2:
        raise ShapeError(f"{name} must be an int or a pair, got {v}")
    return v


def _as_padding(padding):
    """Accept ``p``, ``(pH, pW)`` or ``((top, bottom), (left, right))``."""
    if isinstance(padding, (int, np.integer)):
        p = int(padding)
        return (p, p), (p, p)
    ph, pw = padding
    ph = (int(ph), int(ph)) if isinstance(ph, (int, np.integer)) else tuple(int(i) for i in ph)
    pw = (int(pw), int(pw)) if isinstance(pw, (int, np.integer)) else tuple(int(i) for i in pw)
    return ph, pw


def conv_output_size(n: int, k: int, stride: int, dilation: int, pad_total: int) -> int:
    return (n + pad_total - dilation * (k - 1) - 1) // stride + 1


def conv2d(x, weight, bias=None, stride=1, dilation=1, padding=0) -> Tensor:
    """2-D cross-correlation of (B, C_in, H, W) with (C_out, C_in, kH, kW)."""
    x, weight = _pair(x, weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-D input and kernel, got {x.shape} and {weight.shape}")
    if weight.shape[1] != x.shape[1]:
        raise ShapeError(f"conv2d: kernel expects {weight.shape[1]} input channels, input {x.shape} has {x.shape[1]}")
    stride = _as_pair(stride, "stride")
    dilation = _as_pair(dilation, "dilation")
    if min(dilation) < 1 or min(stride) < 1:
        raise ShapeError(f"conv2d: stride {stride} and dilation {dilation} must be >= 1")
    (pt, pb), (pl, pr) = _as_padding(padding)
    kh, kw = weight.shape[2:]
    ho = conv_output_size(x.shape[2], kh, stride[0], dilation[0], pt + pb)
    wo = conv_output_size(x.shape[3], kw, stride[1], dilation[1], pl + pr)
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv2d: input {x.shape} with kernel {weight.shape} gives empty output ({ho}, {wo})")
    inputs = (x, weight) if bias is None else (x, weight, _wrap(bias, x))
    if bias is not None and inputs[2].shape != (weight.shape[0],):
        raise ShapeError(f"conv2d: bias {inputs[2].shape} does not match {weight.shape[0]} output channels")
    xd = x.data
    if pt or pb or pl or pr:
        xp = np.pad(xd, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    else:
        xp = xd
    wd = weight.data.astype(xd.dtype, copy=False)
    out = kernels.conv2d_forward(xp, wd, stride, dilation, (ho, wo))
    if bias is not None:
        out += inputs[2].data[None, :, None, None]

    def back(g):
        g = np.ascontiguousarray(g)
        gx = None
        if x.requires_grad:
            gxp = kernels.conv2d_backward_input(g, wd, stride, dilation, xp.shape[2:])
            gx = gxp[:, :, pt:pt + xd.shape[2], pl:pl + xd.shape[3]]
        gw = kernels.conv2d_backward_weight(xp, g, stride, dilation, (kh, kw)) if weight.requires_grad else None
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return make_result("conv2d", inputs, out, back)


def conv_transpose2d(x, weight, bias=None, stride=1, padding=0, output_padding=0,
                     dilation=1, output_size=None) -> Tensor:
    """Transposed convolution with weight (C_in, C_out, kH, kW).

    ``output_size`` pins the spatial size; a mismatch raises instead of
    silently producing a neighbouring size.
    """
    x, weight = _pair(x, weight)
    if x.ndim != 4 or weight.ndim != 4 or weight.shape[0] != x.shape[1]:
        raise ShapeError(f"conv_transpose2d: input {x.shape} incompatible with kernel {weight.shape}")
    stride = _as_pair(stride, "stride")
    dilation = _as_pair(dilation, "dilation")
    ph, pw = _as_pair(padding, "padding")
    oph, opw = _as_pair(output_padding, "output_padding")
    kh, kw = weight.shape[2:]
    h, w = x.shape[2:]
    full_h = (h - 1) * stride[0] + dilation[0] * (kh - 1) + 1 + oph
    full_w = (w - 1) * stride[1] + dilation[1] * (kw - 1) + 1 + opw
    ho, wo = full_h - 2 * ph, full_w - 2 * pw
    if output_size is not None and (ho, wo) != tuple(output_size):
        raise ShapeError(f"conv_transpose2d: output size ({ho}, {wo}) != pinned size {tuple(output_size)}")
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv_transpose2d: empty output ({ho}, {wo})")
    inputs = (x, weight) if bias is None else (x, weight, _wrap(bias, x))
    xd = np.ascontiguousarray(x.data)
    wd = weight.data.astype(xd.dtype, copy=False)
    full = kernels.conv2d_backward_input(xd, wd, stride, dilation, (full_h, full_w))
    out = full[:, :, ph:ph + ho, pw:pw + wo]
    if bias is not None:
        out = out + inputs[2].data[None, :, None, None]

    def back(g):
        gfull = np.zeros(full.shape, dtype=g.dtype)
        gfull[:, :, ph:ph + ho, pw:pw + wo] = g
        gx = kernels.conv2d_forward(gfull, wd, stride, dilation, (h, w)) if x.requires_grad else None
        gw = kernels.conv2d_backward_weight(gfull, xd, stride, dilation, (kh, kw)) if weight.requires_grad else None
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return make_result("conv_transpose2d", inputs, np.ascontiguousarray(out), back)


def depthwise_conv1d(x, weight, bias=None, padding=None) -> Tensor:
    """Per-channel 1-D cross-correlation of (B, C, L) with weight (C, k).

    ``padding`` is ``(left, right)``; the default keeps the length for odd k.
    """
    x, weight = _pair(x, weight)
    if x.ndim != 3 or weight.ndim != 2 or weight.shape[0] != x.shape[1]:
        raise ShapeError(f"depthwise_conv1d: input {x.shape} incompatible with weight {weight.shape}")
    k = weight.shape[1]
    left, right = (k // 2, k - 1 - k // 2) if padding is None else padding
    if x.shape[2] + left + right - k + 1 <= 0:
        raise ShapeError(f"depthwise_conv1d: input {x.shape} too short for kernel {k}")
    inputs = (x, weight) if bias is None else (x, weight, _wrap(bias, x))
    xd = x.data
    xp = np.pad(xd, ((0, 0), (0, 0), (left, right))) if (left or right) else xd
    wd = weight.data.astype(xd.dtype, copy=False)
    out = kernels.dwconv1d_forward(xp, wd)
    if bias is not None:
        out += inputs[2].data[None, :, None]

    def back(g):
        g = np.ascontiguousarray(g)
        gx = None
        if x.requires_grad:
            gx = kernels.dwconv1d_backward_input(g, wd)[:, :, left:left + xd.shape[2]]
        gw = kernels.dwconv1d_backward_weight(xp, g, k) if weight.requires_grad else None
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2)))
        return tuple(grads)

    return make_result("depthwise_conv1d", inputs, out, back)


# ---------------------------------------------------------------------------
# operator sugar
# ---------------------------------------------------------------------------

Tensor.__add__ = add
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = sub
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = mul
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__truediv__ = div
Tensor.__rtruediv__ = lambda self, other: div(other, self)
Tensor.__neg__ = neg
Tensor.__matmul__ = matmul
Tensor.__getitem__ = getitem
Tensor.sum = sum
Tensor.mean = mean
Tensor.reshape = lambda self, *shape: reshape(self, shape[0] if len(shape) == 1 and not isinstance(shape[0], int) else shape)
Tensor.transpose = lambda self, *axes: transpose(self, axes[0] if len(axes) == 1 and not isinstance(axes[0], int) else axes)
