"""Dense tensor operations used by the inference engine.

All operations are pure functions over numpy arrays.  Arrays are float32
row-major by default; reductions (convolution, pooling sums) accumulate in
float64 and cast back, so results stay deterministic and close to a naive
double-precision loop.  Passing float64 inputs keeps the whole computation
in float64, which the finite-difference tests rely on.
"""

import numpy as np

__all__ = [
    "as_tensor",
    "conv2d",
    "conv2d_input_grad",
    "conv2d_param_grad",
    "maxpool2d",
    "maxpool2d_grad",
    "global_avg_pool",
    "dense",
    "relu",
    "softmax",
]


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_tensor(x, dtype=np.float32):
    """Coerce to a contiguous array of the working dtype."""
    a = np.ascontiguousarray(x, dtype=dtype)
    if a.size == 0:
        raise DimensionError("empty tensor (all extents must be >= 1)")
    return a


def _out_extent(size, k, stride, padding):
    return (size + 2 * padding - k) // stride + 1


def _im2col(xp, kh, kw, stride, h_out, w_out):
    # xp: padded input [C, Hp, Wp] -> [C*kh*kw, h_out*w_out]
    c = xp.shape[0]
    cols = np.empty((c, kh, kw, h_out, w_out), dtype=xp.dtype)
    for di in range(kh):
        for dj in range(kw):
            cols[:, di, dj] = xp[:, di:di + stride * h_out:stride,
                                 dj:dj + stride * w_out:stride]
    return cols.reshape(c * kh * kw, h_out * w_out)


def _col2im(cols, c, hp, wp, kh, kw, stride, h_out, w_out):
    # scatter-add the column view back into a padded image
    xp = np.zeros((c, hp, wp), dtype=cols.dtype)
    cols = cols.reshape(c, kh, kw, h_out, w_out)
    for di in range(kh):
        for dj in range(kw):
            xp[:, di:di + stride * h_out:stride,
               dj:dj + stride * w_out:stride] += cols[:, di, dj]
    return xp


def conv2d(x, kernels, bias, stride=1, padding=0):
    """Cross-correlation of [C,H,W] with [K,C,kh,kw] kernels (no flip).

    Zero padding; output extent floor((H + 2p - kh)/stride) + 1.
    """
    x = np.asarray(x)
    kernels = np.asarray(kernels)
    bias = np.asarray(bias)
    if x.ndim != 3 or kernels.ndim != 4:
        raise DimensionError(f"conv2d expects 3-D input and 4-D kernels, "
                             f"got {x.shape} and {kernels.shape}")
    c, h, w = x.shape
    k, ck, kh, kw = kernels.shape
    if ck != c:
        raise DimensionError(f"kernel channels {ck} != input channels {c}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise DimensionError("kernel larger than padded input")
    h_out = _out_extent(h, kh, stride, padding)
    w_out = _out_extent(w, kw, stride, padding)
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding))).astype(np.float64)
    cols = _im2col(xp, kh, kw, stride, h_out, w_out)
    wmat = kernels.reshape(k, c * kh * kw).astype(np.float64)
    out = wmat @ cols + bias.astype(np.float64)[:, None]
    return out.reshape(k, h_out, w_out).astype(x.dtype)


def conv2d_input_grad(grad_out, x_shape, kernels, stride=1, padding=0):
    """Gradient of conv2d w.r.t. its input, given the output cotangent."""
    c, h, w = x_shape
    k, _, kh, kw = kernels.shape
    h_out, w_out = grad_out.shape[1], grad_out.shape[2]
    wmat = kernels.reshape(k, c * kh * kw).astype(np.float64)
    cols_grad = wmat.T @ grad_out.reshape(k, -1).astype(np.float64)
    xp = _col2im(cols_grad, c, h + 2 * padding, w + 2 * padding,
                 kh, kw, stride, h_out, w_out)
    if padding:
        xp = xp[:, padding:h + padding, padding:w + padding]
    return xp.astype(grad_out.dtype)


def conv2d_param_grad(grad_out, x, kernel_shape, stride=1, padding=0):
    """Gradients of conv2d w.r.t. kernels and bias."""
    k, c, kh, kw = kernel_shape
    h_out, w_out = grad_out.shape[1], grad_out.shape[2]
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding))).astype(np.float64)
    cols = _im2col(xp, kh, kw, stride, h_out, w_out)
    g = grad_out.reshape(k, -1).astype(np.float64)
    dk = (g @ cols.T).reshape(k, c, kh, kw)
    db = g.sum(axis=1)
    return dk.astype(grad_out.dtype), db.astype(grad_out.dtype)


def maxpool2d(x, window, stride):
    """Max pooling over [C,H,W]; returns (output, argmax).

    argmax holds, per output element, the flat spatial index i*W + j of the
    winning input element.  Ties go to the first element of the window in
    row-major order, so the backward routing is deterministic.
    """
    x = np.asarray(x)
    if x.ndim != 3:
        raise DimensionError(f"maxpool2d expects 3-D input, got {x.shape}")
    c, h, w = x.shape
    if window > h or window > w:
        raise DimensionError(f"window {window} larger than input {h}x{w}")
    h_out = (h - window) // stride + 1
    w_out = (w - window) // stride + 1
    best = np.full((c, h_out, w_out), -np.inf, dtype=x.dtype)
    arg = np.zeros((c, h_out, w_out), dtype=np.int64)
    rows = np.arange(h_out) * stride
    cols = np.arange(w_out) * stride
    for di in range(window):
        for dj in range(window):
            view = x[:, di:di + stride * h_out:stride, dj:dj + stride * w_out:stride]
            mask = view > best
            best = np.where(mask, view, best)
            flat = (rows[:, None] + di) * w + (cols[None, :] + dj)
            arg = np.where(mask, flat[None, :, :], arg)
    return best, arg


def maxpool2d_grad(grad_out, argmax, x_shape):
    """Route the output cotangent to the recorded argmax positions."""
    c, h, w = x_shape
    gx = np.zeros((c, h * w), dtype=np.float64)
    chan = np.repeat(np.arange(c), argmax[0].size)
    np.add.at(gx, (chan, argmax.reshape(c, -1).ravel()), grad_out.reshape(c, -1).ravel())
    return gx.reshape(c, h, w).astype(grad_out.dtype)


def global_avg_pool(x):
    """[K,u,v] -> [K]; mean over the spatial grid (Z = u*v)."""
    x = np.asarray(x)
    if x.ndim != 3:
        raise DimensionError(f"global_avg_pool expects 3-D input, got {x.shape}")
    return x.astype(np.float64).mean(axis=(1, 2)).astype(x.dtype)


def dense(x, weights, bias):
    """weights[M,N] @ x[N] + bias[M]."""
    x = np.asarray(x)
    weights = np.asarray(weights)
    if x.ndim != 1 or weights.ndim != 2 or weights.shape[1] != x.shape[0]:
        raise DimensionError(f"dense shape mismatch: weights {weights.shape}, "
                             f"input {x.shape}")
    out = weights.astype(np.float64) @ x.astype(np.float64) + np.asarray(bias, np.float64)
    return out.astype(x.dtype)


def relu(x):
    return np.maximum(np.asarray(x), 0)


def softmax(x):
    """Numerically stable softmax over a 1-D score vector."""
    x = np.asarray(x)
    dtype = x.dtype if x.dtype.kind == "f" else np.float64
    z = np.exp(x.astype(np.float64) - float(x.max()))
    return (z / z.sum()).astype(dtype)
