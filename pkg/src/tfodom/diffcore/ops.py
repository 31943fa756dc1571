"""Differentiable primitives: pointwise math, shape plumbing, linear maps,
convolution/pooling, resizing and normalizations.

Binary pointwise ops accept equal shapes or a scalar on either side;
general broadcasting is deliberately not supported (use explicit
``expand_leading``/``tile_to`` where a batch dimension must be added).
All forwards are plain numpy and deterministic for a fixed thread count.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor

__all__ = [
    "add", "sub", "mul", "div", "neg", "scale",
    "relu", "sigmoid", "exp", "log", "sqrt", "sin", "cos", "absolute",
    "atan2", "clamp", "where", "square",
    "reshape", "transpose", "concat", "stack", "getitem", "expand_leading",
    "sum", "mean", "matmul", "dense",
    "conv2d", "max_pool2d", "adaptive_avg_pool2d", "pool2d", "bilinear_resize",
    "softmax", "batch_norm", "layer_norm", "pointwise", "normalize",
]

_builtin_sum = sum


def _binary_prep(a, b, op_name):
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ValueError(f"{op_name}: shapes {a.shape} and {b.shape} differ and neither is a scalar")
    return a, b


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Collapse a broadcast gradient back to the scalar operand's shape."""
    if grad.shape == shape:
        return grad
    return np.sum(grad).reshape(shape) if shape != () else np.asarray(np.sum(grad))


# ---------------------------------------------------------------------------
# pointwise
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _binary_prep(a, b, "add")
    out = a.data + b.data

    def bwd(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return Tensor.from_op(out, (a, b), bwd, name="add")


def sub(a, b) -> Tensor:
    a, b = _binary_prep(a, b, "sub")
    out = a.data - b.data

    def bwd(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return Tensor.from_op(out, (a, b), bwd, name="sub")


def mul(a, b) -> Tensor:
    a, b = _binary_prep(a, b, "mul")
    out = a.data * b.data

    def bwd(g):
        return _reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)

    return Tensor.from_op(out, (a, b), bwd, name="mul")


def div(a, b) -> Tensor:
    a, b = _binary_prep(a, b, "div")
    out = a.data / b.data

    def bwd(g):
        ga = _reduce_to(g / b.data, a.shape)
        gb = _reduce_to(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return Tensor.from_op(out, (a, b), bwd, name="div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return Tensor.from_op(-a.data, (a,), lambda g: (-g,), name="neg")


def scale(a, factor: float) -> Tensor:
    """Multiply by a python scalar (no second tensor operand)."""
    a = as_tensor(a)
    factor = float(factor)
    return Tensor.from_op(a.data * factor, (a,), lambda g: (g * factor,), name="scale")


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = np.maximum(a.data, 0.0)

    def bwd(g):
        return (g * (a.data > 0),)

    return Tensor.from_op(out, (a,), bwd, name="relu")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bwd(g):
        return (g * out * (1.0 - out),)

    return Tensor.from_op(out, (a,), bwd, name="sigmoid")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)

    def bwd(g):
        return (g * out,)

    return Tensor.from_op(out, (a,), bwd, name="exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        bad = float(np.min(a.data))
        raise ValueError(f"log: non-positive input (min value {bad})")
    out = np.log(a.data)

    def bwd(g):
        return (g / a.data,)

    return Tensor.from_op(out, (a,), bwd, name="log")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise ValueError("sqrt: negative input")
    out = np.sqrt(a.data)

    def bwd(g):
        return (g * (0.5 / np.maximum(out, np.finfo(out.dtype).tiny)),)

    return Tensor.from_op(out, (a,), bwd, name="sqrt")


def sin(a) -> Tensor:
    a = as_tensor(a)
    out = np.sin(a.data)

    def bwd(g):
        return (g * np.cos(a.data),)

    return Tensor.from_op(out, (a,), bwd, name="sin")


def cos(a) -> Tensor:
    a = as_tensor(a)
    out = np.cos(a.data)

    def bwd(g):
        return (g * -np.sin(a.data),)

    return Tensor.from_op(out, (a,), bwd, name="cos")


def absolute(a) -> Tensor:
    """|x| with subgradient 0 at 0."""
    a = as_tensor(a)
    out = np.abs(a.data)

    def bwd(g):
        return (g * np.sign(a.data),)

    return Tensor.from_op(out, (a,), bwd, name="abs")


def atan2(y, x) -> Tensor:
    y, x = _binary_prep(y, x, "atan2")
    out = np.arctan2(y.data, x.data)

    def bwd(g):
        denom = y.data * y.data + x.data * x.data
        return _reduce_to(g * x.data / denom, y.shape), _reduce_to(-g * y.data / denom, x.shape)

    return Tensor.from_op(out, (y, x), bwd, name="atan2")


def clamp(a, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient is 1 inside the range, 0 outside."""
    a = as_tensor(a)
    out = np.clip(a.data, lo, hi)

    def bwd(g):
        inside = (a.data >= lo) & (a.data <= hi)
        return (g * inside,)

    return Tensor.from_op(out, (a,), bwd, name="clamp")


def where(mask: np.ndarray, a, b) -> Tensor:
    """Elementwise select by a plain boolean mask (mask is not differentiated)."""
    a, b = _binary_prep(a, b, "where")
    mask = np.asarray(mask, dtype=bool)
    out = np.where(mask, a.data, b.data)

    def bwd(g):
        return _reduce_to(g * mask, a.shape), _reduce_to(g * ~mask, b.shape)

    return Tensor.from_op(out, (a, b), bwd, name="where")


def square(a) -> Tensor:
    a = as_tensor(a)
    return mul(a, a)


def pointwise(a, kind: str, other=None) -> Tensor:
    """Dispatch by name; binary kinds take ``other``."""
    unary = {"relu": relu, "sigmoid": sigmoid, "exp": exp, "log": log, "neg": neg,
             "sqrt": sqrt, "sin": sin, "cos": cos, "abs": absolute}
    if kind in unary:
        return unary[kind](a)
    if kind == "scale":
        return scale(a, other)
    binary = {"add": add, "sub": sub, "mul": mul, "div": div, "atan2": atan2}
    if kind in binary:
        return binary[kind](a, other)
    raise ValueError(f"pointwise: unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# shape plumbing
# ---------------------------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)
    in_shape = a.shape

    def bwd(g):
        return (g.reshape(in_shape),)

    return Tensor.from_op(out, (a,), bwd, name="reshape")


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    out = np.transpose(a.data, axes)
    inverse = tuple(np.argsort(axes))

    def bwd(g):
        return (np.transpose(g, inverse),)

    return Tensor.from_op(out, (a,), bwd, name="transpose")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        return tuple(
            np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(tensors))
        )

    return Tensor.from_op(out, tuple(tensors), bwd, name="concat")


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)

    def bwd(g):
        parts = np.moveaxis(g, axis, 0)
        return tuple(parts[i] for i in range(len(tensors)))

    return Tensor.from_op(out, tuple(tensors), bwd, name="stack")


def getitem(a, key) -> Tensor:
    a = as_tensor(a)
    out = a.data[key]
    in_shape = a.shape
    dtype = a.data.dtype

    def bwd(g):
        full = np.zeros(in_shape, dtype=dtype)
        np.add.at(full, key, g)
        return (full,)

    return Tensor.from_op(np.array(out, copy=True), (a,), bwd, name="getitem")


def expand_leading(a, n: int) -> Tensor:
    """Repeat along a new leading axis: shape S -> (n, *S). Gradient sums it away.

    This is the one sanctioned broadcast helper (per-batch reuse of
    embeddings and other shared rows)."""
    a = as_tensor(a)
    out = np.broadcast_to(a.data, (n,) + a.shape).copy()

    def bwd(g):
        return (g.sum(axis=0),)

    return Tensor.from_op(out, (a,), bwd, name="expand_leading")


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = np.sum(a.data, axis=axis, keepdims=keepdims)
    in_shape = a.shape

    def bwd(g):
        g = np.asarray(g)
        if axis is None:
            return (np.broadcast_to(g, in_shape).copy() if g.shape != in_shape else g,)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, in_shape).copy(),)

    return Tensor.from_op(np.asarray(out), (a,), bwd, name="sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = 1
        for ax in axes:
            count *= a.shape[ax]
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# ---------------------------------------------------------------------------
# linear maps
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product. Supports 2-D @ 2-D, and stacked 3-D with either
    operand optionally unbatched 2-D."""
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    if a.ndim < 2 or b.ndim < 2 or a.ndim > 3 or b.ndim > 3:
        raise ValueError(f"matmul: unsupported ranks {a.ndim} and {b.ndim}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: inner dimensions {a.shape[-1]} != {b.shape[-2]}")
    if a.ndim == 3 and b.ndim == 3 and a.shape[0] != b.shape[0]:
        raise ValueError(f"matmul: batch dimensions {a.shape[0]} != {b.shape[0]}")
    out = np.matmul(a.data, b.data)

    def bwd(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        if a.ndim == 2 and ga.ndim == 3:
            ga = ga.sum(axis=0)
        if b.ndim == 2 and gb.ndim == 3:
            gb = gb.sum(axis=0)
        return ga, gb

    return Tensor.from_op(out, (a, b), bwd, name="matmul")


def dense(x, weight, bias=None) -> Tensor:
    """Affine map over the trailing axis: y[..., o] = x[..., i] W[i, o] + b[o]."""
    x = as_tensor(x)
    weight = as_tensor(weight, like=x)
    if weight.ndim != 2:
        raise ValueError(f"dense: weight must be 2-D, got shape {weight.shape}")
    din, dout = weight.shape
    if x.shape[-1] != din:
        raise ValueError(f"dense: input feature dimension {x.shape[-1]} != weight rows {din}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, din)
    out = x2 @ weight.data
    if bias is not None:
        bias = as_tensor(bias, like=x)
        if bias.shape != (dout,):
            raise ValueError(f"dense: bias shape {bias.shape} != ({dout},)")
        out = out + bias.data
    out = out.reshape(*lead, dout)

    parents = (x, weight) if bias is None else (x, weight, bias)

    def bwd(g):
        g2 = g.reshape(-1, dout)
        gx = (g2 @ weight.data.T).reshape(x.shape)
        gw = x2.T @ g2
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return Tensor.from_op(out, parents, bwd, name="dense")


# ---------------------------------------------------------------------------
# convolution / pooling / resize
# ---------------------------------------------------------------------------

def _pair(v):
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def _im2col(x: np.ndarray, kh: int, kw: int, sh: int, sw: int, ph: int, pw: int, pad_value: float = 0.0):
    """Return (patches[B, C*kh*kw, Ho*Wo], Ho, Wo). Patch rows ordered (c, i, j) row-major."""
    B, C, H, W = x.shape
    Hp, Wp = H + 2 * ph, W + 2 * pw
    if kh > Hp or kw > Wp:
        raise ValueError(f"kernel ({kh},{kw}) exceeds padded input ({Hp},{Wp})")
    Ho = (Hp - kh) // sh + 1
    Wo = (Wp - kw) // sw + 1
    if ph or pw:
        xp = np.full((B, C, Hp, Wp), pad_value, dtype=x.dtype)
        xp[:, :, ph:ph + H, pw:pw + W] = x
    else:
        xp = x
    cols = np.empty((B, C, kh, kw, Ho, Wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + Ho * sh:sh, j:j + Wo * sw:sw]
    return cols.reshape(B, C * kh * kw, Ho * Wo), Ho, Wo


def _col2im(gcols: np.ndarray, x_shape, kh, kw, sh, sw, ph, pw):
    """Scatter-add patch gradients back to input layout."""
    B, C, H, W = x_shape
    Hp, Wp = H + 2 * ph, W + 2 * pw
    Ho = (Hp - kh) // sh + 1
    Wo = (Wp - kw) // sw + 1
    g6 = gcols.reshape(B, C, kh, kw, Ho, Wo)
    gx = np.zeros((B, C, Hp, Wp), dtype=gcols.dtype)
    for i in range(kh):
        for j in range(kw):
            gx[:, :, i:i + Ho * sh:sh, j:j + Wo * sw:sw] += g6[:, :, i, j]
    return gx[:, :, ph:ph + H, pw:pw + W]


def conv2d(x, kernel, bias=None, stride=1, padding=0) -> Tensor:
    """2-D cross-correlation of NCHW input with OIHW kernel."""
    x = as_tensor(x)
    kernel = as_tensor(kernel, like=x)
    if x.ndim != 4:
        raise ValueError(f"conv2d: input must be 4-D [B,C,H,W], got shape {x.shape}")
    if kernel.ndim != 4:
        raise ValueError(f"conv2d: kernel must be 4-D [Co,C,kh,kw], got shape {kernel.shape}")
    B, C, H, W = x.shape
    Co, Ck, kh, kw = kernel.shape
    if Ck != C:
        raise ValueError(f"conv2d: input channels {C} do not match kernel channels {Ck}")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    if sh < 1 or sw < 1:
        raise ValueError(f"conv2d: stride must be >= 1, got ({sh},{sw})")

    cols, Ho, Wo = _im2col(x.data, kh, kw, sh, sw, ph, pw)
    wmat = kernel.data.reshape(Co, C * kh * kw)
    out = np.einsum("ok,bkn->bon", wmat, cols, optimize=True)
    if bias is not None:
        bias = as_tensor(bias, like=x)
        if bias.shape != (Co,):
            raise ValueError(f"conv2d: bias shape {bias.shape} != ({Co},)")
        out = out + bias.data[None, :, None]
    out = out.reshape(B, Co, Ho, Wo)

    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def bwd(g):
        g3 = g.reshape(B, Co, Ho * Wo)
        gw = np.einsum("bon,bkn->ok", g3, cols, optimize=True).reshape(kernel.shape)
        gcols = np.einsum("ok,bon->bkn", wmat, g3, optimize=True)
        gx = _col2im(gcols, x.shape, kh, kw, sh, sw, ph, pw)
        if bias is None:
            return gx, gw
        return gx, gw, g3.sum(axis=(0, 2))

    return Tensor.from_op(out, parents, bwd, name="conv2d")


def max_pool2d(x, kernel_size, stride=None, padding=0) -> Tensor:
    """Max pooling; gradient routes to the first (row-major) maximum per window."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ValueError(f"max_pool2d: input must be 4-D, got shape {x.shape}")
    kh, kw = _pair(kernel_size)
    sh, sw = _pair(stride if stride is not None else kernel_size)
    ph, pw = _pair(padding)
    B, C, H, W = x.shape
    cols, Ho, Wo = _im2col(x.data, kh, kw, sh, sw, ph, pw, pad_value=-np.inf)
    windows = cols.reshape(B, C, kh * kw, Ho * Wo)
    arg = np.argmax(windows, axis=2)  # first occurrence wins on ties
    out = np.take_along_axis(windows, arg[:, :, None, :], axis=2)[:, :, 0, :].reshape(B, C, Ho, Wo)

    def bwd(g):
        gw = np.zeros((B, C, kh * kw, Ho * Wo), dtype=g.dtype)
        np.put_along_axis(gw, arg[:, :, None, :], g.reshape(B, C, 1, Ho * Wo), axis=2)
        return (_col2im(gw.reshape(B, C * kh * kw, Ho * Wo), x.shape, kh, kw, sh, sw, ph, pw),)

    return Tensor.from_op(out, (x,), bwd, name="max_pool2d")


def _adaptive_matrix(n_in: int, n_out: int, dtype) -> np.ndarray:
    """Averaging matrix M[o, i]: contiguous floor/ceil bins, rows sum to 1."""
    m = np.zeros((n_out, n_in), dtype=dtype)
    for o in range(n_out):
        lo = (o * n_in) // n_out
        hi = -(-(o + 1) * n_in // n_out)  # ceil
        m[o, lo:hi] = 1.0 / (hi - lo)
    return m


def adaptive_avg_pool2d(x, output_size) -> Tensor:
    """Average pooling to a fixed output grid via floor/ceil interval bins."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ValueError(f"adaptive_avg_pool2d: input must be 4-D, got shape {x.shape}")
    oh, ow = _pair(output_size)
    B, C, H, W = x.shape
    if oh < 1 or ow < 1:
        raise ValueError(f"adaptive_avg_pool2d: target ({oh},{ow}) must be >= 1")
    if oh > H or ow > W:
        raise ValueError(f"adaptive_avg_pool2d: target ({oh},{ow}) exceeds input ({H},{W})")
    mh = _adaptive_matrix(H, oh, x.data.dtype)
    mw = _adaptive_matrix(W, ow, x.data.dtype)
    out = np.einsum("oh,bchw,pw->bcop", mh, x.data, mw, optimize=True)

    def bwd(g):
        return (np.einsum("oh,bcop,pw->bchw", mh, g, mw, optimize=True),)

    return Tensor.from_op(out, (x,), bwd, name="adaptive_avg_pool2d")


def pool2d(x, mode: str, **params) -> Tensor:
    """Dispatch: mode 'max' (kernel_size, stride, padding) or 'adaptive_avg' (output_size)."""
    if mode == "max":
        return max_pool2d(x, **params)
    if mode == "adaptive_avg":
        return adaptive_avg_pool2d(x, **params)
    raise ValueError(f"pool2d: unknown mode {mode!r}")


def _interp_matrix(n_in: int, n_out: int, dtype) -> np.ndarray:
    """Linear interpolation matrix, half-pixel-center (align-corners-false)."""
    m = np.zeros((n_out, n_in), dtype=dtype)
    if n_in == 1:
        m[:, 0] = 1.0
        return m
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * n_in / n_out - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.minimum(src.astype(np.int64), n_in - 2)
    frac = src - i0
    for o in range(n_out):
        m[o, i0[o]] += 1.0 - frac[o]
        m[o, i0[o] + 1] += frac[o]
    return m


def bilinear_resize(x, target) -> Tensor:
    """Bilinear resize of NCHW maps to (H2, W2), align-corners-false."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ValueError(f"bilinear_resize: input must be 4-D, got shape {x.shape}")
    h2, w2 = _pair(target)
    if h2 < 1 or w2 < 1:
        raise ValueError(f"bilinear_resize: target ({h2},{w2}) must be >= 1")
    B, C, H, W = x.shape
    if (h2, w2) == (H, W):
        return Tensor.from_op(x.data.copy(), (x,), lambda g: (g,), name="bilinear_resize")
    mh = _interp_matrix(H, h2, x.data.dtype)
    mw = _interp_matrix(W, w2, x.data.dtype)
    out = np.einsum("oh,bchw,pw->bcop", mh, x.data, mw, optimize=True)

    def bwd(g):
        return (np.einsum("oh,bcop,pw->bchw", mh, g, mw, optimize=True),)

    return Tensor.from_op(out, (x,), bwd, name="bilinear_resize")


# ---------------------------------------------------------------------------
# normalizations
# ---------------------------------------------------------------------------

def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise ValueError(f"softmax: axis {axis} out of range for rank {x.ndim}")
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def bwd(g):
        dot = np.sum(g * out, axis=axis, keepdims=True)
        return ((g - dot) * out,)

    return Tensor.from_op(out, (x,), bwd, name="softmax")


def batch_norm(x, gamma, beta, running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel normalization of NCHW input with affine parameters.

    Training mode normalizes by batch statistics (biased variance) and
    updates the running buffers in place; eval mode uses the buffers.
    """
    x = as_tensor(x)
    gamma = as_tensor(gamma, like=x)
    beta = as_tensor(beta, like=x)
    if x.ndim != 4:
        raise ValueError(f"batch_norm: input must be 4-D, got shape {x.shape}")
    B, C, H, W = x.shape
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ValueError(f"batch_norm: affine parameters must have shape ({C},)")

    axes = (0, 2, 3)
    if training:
        mean_c = x.data.mean(axis=axes)
        var_c = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean_c
        running_var *= 1.0 - momentum
        running_var += momentum * var_c
    else:
        mean_c = running_mean
        var_c = running_var

    inv_std = 1.0 / np.sqrt(var_c + eps)
    xhat = (x.data - mean_c[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    n = B * H * W

    def bwd(g):
        ggamma = np.sum(g * xhat, axis=axes)
        gbeta = np.sum(g, axis=axes)
        gxhat = g * gamma.data[None, :, None, None]
        if training:
            gx = (inv_std[None, :, None, None] / n) * (
                n * gxhat
                - np.sum(gxhat, axis=axes)[None, :, None, None]
                - xhat * np.sum(gxhat * xhat, axis=axes)[None, :, None, None]
            )
        else:
            gx = gxhat * inv_std[None, :, None, None]
        return gx, ggamma, gbeta

    return Tensor.from_op(out, (x, gamma, beta), bwd, name="batch_norm")


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the trailing axis with affine parameters."""
    x = as_tensor(x)
    gamma = as_tensor(gamma, like=x)
    beta = as_tensor(beta, like=x)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ValueError(f"layer_norm: affine parameters must have shape ({d},)")
    mean_r = x.data.mean(axis=-1, keepdims=True)
    var_r = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var_r + eps)
    xhat = (x.data - mean_r) * inv_std
    out = gamma.data * xhat + beta.data

    def bwd(g):
        ggamma = np.sum(g * xhat, axis=tuple(range(x.ndim - 1)))
        gbeta = np.sum(g, axis=tuple(range(x.ndim - 1)))
        gxhat = g * gamma.data
        gx = (inv_std / d) * (
            d * gxhat
            - np.sum(gxhat, axis=-1, keepdims=True)
            - xhat * np.sum(gxhat * xhat, axis=-1, keepdims=True)
        )
        return gx, ggamma, gbeta

    return Tensor.from_op(out, (x, gamma, beta), bwd, name="layer_norm")


def normalize(x, kind: str, **params) -> Tensor:
    """Dispatch: 'softmax' (axis), 'batch_norm' (stats...), 'layer_norm' (gamma, beta, eps)."""
    if kind == "softmax":
        return softmax(x, **params)
    if kind == "batch_norm":
        return batch_norm(x, **params)
    if kind == "layer_norm":
        return layer_norm(x, **params)
    raise ValueError(f"normalize: unknown kind {kind!r}")
