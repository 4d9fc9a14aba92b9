"""Dense array operations with hand-written backward passes.

Every op works on plain numpy arrays laid out channel-first (``c x H x W``,
optionally with leading batch axes).  Arrays produced by :func:`tensor` are
32-bit; ops preserve the dtype of their inputs, so a caller may run the same
code in float64 when it needs extra headroom (e.g. finite differences).

Backward functions take the upstream gradient plus the forward inputs and
return gradients with the shapes of those inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DTYPE = np.float32
CHANNEL_NORM_EPS = 1e-3

# sample positions within this many pixels of an integer are snapped to it
_SNAP_PIXELS = 1e-4


class NonFiniteError(ValueError):
    """Raised when an array contains NaN or Inf."""


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def tensor(data, shape=None) -> np.ndarray:
    """Build a validated float32 array.

    Parameters
    ----------
    data : array_like
        Values, nested sequences or an array.
    shape : sequence of int, optional
        Target shape; ``data`` must hold exactly ``prod(shape)`` values.
    """
    arr = np.array(data, dtype=DTYPE)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s < 1 for s in shape):
            raise ShapeError(f"extents must be positive, got {shape}")
        if arr.size != int(np.prod(shape)):
            raise ShapeError(f"{arr.size} values do not fill shape {shape}")
        arr = arr.reshape(shape)
    return check_finite(arr)


def check_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{what} contains NaN or Inf")
    return x


def zeros(shape, dtype=DTYPE) -> np.ndarray:
    return np.zeros(shape, dtype=dtype)


@dataclass
class Parameter:
    """A trainable value together with its accumulated gradient."""

    value: np.ndarray
    grad: np.ndarray = field(default=None)

    def __post_init__(self):
        self.value = np.asarray(self.value)
        if self.value.dtype.kind != "f":
            self.value = self.value.astype(DTYPE)
        check_finite(self.value, "parameter")
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        elif self.grad.shape != self.value.shape:
            raise ShapeError("gradient shape differs from value shape")

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0

    def accumulate(self, g):
        self.grad += g.astype(self.grad.dtype, copy=False)


def _value(p):
    return p.value if isinstance(p, Parameter) else p


def _axis(x, axis):
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"axis {axis} out of range for rank {x.ndim}")
    return axis % x.ndim


# -- matmul ------------------------------------------------------------------

def matmul(a, b):
    """Matrix product of ``a[..., m, k]`` and ``b[k, n]`` (or matching batch)."""
    a, b = _value(a), _value(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return check_finite(np.matmul(a, b), "matmul output")


def matmul_backward(grad, a, b):
    a, b = _value(a), _value(b)
    ga = np.matmul(grad, np.swapaxes(b, -1, -2))
    gb = np.matmul(np.swapaxes(a, -1, -2), grad)
    # b was broadcast over the leading batch axes of a
    while gb.ndim > b.ndim:
        gb = gb.sum(axis=0)
    return ga, gb


# -- softmax -----------------------------------------------------------------

def softmax(x, axis=-1):
    x = _value(x)
    axis = _axis(x, axis)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def softmax_backward(grad, y, axis=-1):
    """Gradient w.r.t. the logits, given the softmax *output* ``y``."""
    axis = _axis(y, axis)
    return y * (grad - np.sum(grad * y, axis=axis, keepdims=True))


# -- conv2d ------------------------------------------------------------------

def _conv_check(x, kernel):
    if kernel.ndim != 4 or kernel.shape[2] != kernel.shape[3]:
        raise ShapeError(f"kernel must be c_out x c_in x k x k, got {kernel.shape}")
    k = kernel.shape[-1]
    if k not in (1, 3):
        raise ShapeError(f"unsupported kernel size {k}")
    if x.ndim < 3 or x.shape[-3] != kernel.shape[1]:
        raise ShapeError(f"input channels {x.shape[-3:]} do not match kernel {kernel.shape}")
    return k


def _pad(x, p):
    if p == 0:
        return x
    widths = [(0, 0)] * (x.ndim - 2) + [(p, p), (p, p)]
    return np.pad(x, widths)


def conv2d(x, kernel, bias=None):
    """Same-padded 2-D convolution (cross-correlation) with zero fill.

    ``x`` is ``[..., c_in, H, W]``, ``kernel`` is ``[c_out, c_in, k, k]``
    with ``k`` in {1, 3}.
    """
    x, kernel, bias = _value(x), _value(kernel), _value(bias)
    k = _conv_check(x, kernel)
    p = k // 2
    H, W = x.shape[-2:]
    xp = _pad(x, p)
    out = np.zeros(x.shape[:-3] + (kernel.shape[0], H, W), dtype=np.result_type(x, kernel))
    for dy in range(k):
        for dx in range(k):
            patch = xp[..., dy:dy + H, dx:dx + W]
            out += np.einsum("oi,...ihw->...ohw", kernel[:, :, dy, dx], patch)
    if bias is not None:
        out += bias[:, None, None]
    return check_finite(out, "conv2d output")


def conv2d_backward(grad, x, kernel):
    """Returns ``(grad_input, grad_kernel, grad_bias)``."""
    x, kernel = _value(x), _value(kernel)
    k = kernel.shape[-1]
    p = k // 2
    H, W = x.shape[-2:]
    xp = _pad(x, p)
    gxp = np.zeros_like(xp, dtype=np.result_type(grad, kernel))
    gk = np.zeros_like(kernel, dtype=np.result_type(grad, x))
    g2 = grad.reshape((-1,) + grad.shape[-3:])
    for dy in range(k):
        for dx in range(k):
            gxp[..., dy:dy + H, dx:dx + W] += np.einsum(
                "oi,...ohw->...ihw", kernel[:, :, dy, dx], grad)
            patch = xp[..., dy:dy + H, dx:dx + W]
            gk[:, :, dy, dx] = np.einsum(
                "nohw,nihw->oi", g2, patch.reshape((-1,) + patch.shape[-3:]))
    gx = gxp[..., p:p + H, p:p + W] if p else gxp
    gb = grad.sum(axis=tuple(range(grad.ndim - 3)) + (-2, -1))
    return gx, gk, gb


# -- channel norm ------------------------------------------------------------

def channel_norm(x, scale, bias, eps=CHANNEL_NORM_EPS):
    """Standardize across channels at every spatial location, then scale/shift."""
    out, _ = _channel_norm_forward(x, scale, bias, eps)
    return out


def _channel_norm_forward(x, scale, bias, eps):
    x, scale, bias = _value(x), _value(scale), _value(bias)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if x.ndim < 3 or x.shape[-3] < 1:
        raise ShapeError("channel_norm needs at least one channel")
    c = x.shape[-3]
    if scale.shape != (c,) or bias.shape != (c,):
        raise ShapeError(f"scale/bias must have shape ({c},)")
    mu = x.mean(axis=-3, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-3, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, x.dtype))
    xhat = xc * inv
    out = xhat * scale[:, None, None] + bias[:, None, None]
    return out, (xhat, inv)


def channel_norm_backward(grad, x, scale, bias, eps=CHANNEL_NORM_EPS):
    """Returns ``(grad_input, grad_scale, grad_bias)``."""
    _, (xhat, inv) = _channel_norm_forward(x, scale, bias, eps)
    scale = _value(scale)
    batch_axes = tuple(range(grad.ndim - 3)) + (-2, -1)
    g_scale = (grad * xhat).sum(axis=batch_axes)
    g_bias = grad.sum(axis=batch_axes)
    gh = grad * scale[:, None, None]
    gx = inv * (gh - gh.mean(axis=-3, keepdims=True)
                - xhat * (gh * xhat).mean(axis=-3, keepdims=True))
    return gx, g_scale, g_bias


# -- reductions --------------------------------------------------------------

def reduce(x, axis, mode="mean"):
    """Remove ``axis`` by taking the max or the mean over it.

    The mean accumulates slices strictly left to right.
    """
    x = _value(x)
    axis = _axis(x, axis)
    if mode == "max":
        return np.max(x, axis=axis)
    if mode != "mean":
        raise ValueError(f"unknown reduce mode {mode!r}")
    n = x.shape[axis]
    acc = np.take(x, 0, axis=axis).copy()
    for i in range(1, n):
        acc += np.take(x, i, axis=axis)
    return acc / x.dtype.type(n)


def reduce_mean_backward(grad, x, axis):
    x = _value(x)
    axis = _axis(x, axis)
    n = x.shape[axis]
    return np.broadcast_to(np.expand_dims(grad / n, axis), x.shape).copy()


# -- bilinear sampling -------------------------------------------------------

def _sample_positions(coord, size):
    """Map normalized coords to clamped pixel positions, floor index and weight."""
    pos = ((coord.astype(np.float64) + 1.0) * size - 1.0) / 2.0
    pos = np.clip(pos, 0.0, size - 1.0)
    nearest = np.round(pos)
    pos = np.where(np.abs(pos - nearest) < _SNAP_PIXELS, nearest, pos)
    i0 = np.floor(pos).astype(np.intp)
    i0 = np.minimum(i0, max(size - 2, 0))
    w = pos - i0
    i1 = np.minimum(i0 + 1, size - 1)
    return i0, i1, w


def _bilinear_taps(grid, H, W):
    if grid.ndim != 3 or grid.shape[-1] != 2:
        raise ShapeError(f"sampling grid must be Ho x Wo x 2, got {grid.shape}")
    x0, x1, wx = _sample_positions(grid[..., 0], W)
    y0, y1, wy = _sample_positions(grid[..., 1], H)
    return (
        ((y0, x0), (1 - wy) * (1 - wx)),
        ((y0, x1), (1 - wy) * wx),
        ((y1, x0), wy * (1 - wx)),
        ((y1, x1), wy * wx),
    )


def bilinear_sample(x, grid):
    """Sample ``x[c, H, W]`` at normalized positions ``grid[Ho, Wo, 2]``.

    ``grid[..., 0]`` is horizontal, ``grid[..., 1]`` vertical; -1 and 1 are
    the outer edges of the image (pixel centers sit at ``(2i + 1)/n - 1``).
    Positions outside the image are clamped to the border pixels.
    """
    x, grid = _value(x), _value(grid)
    if x.ndim != 3:
        raise ShapeError(f"input must be c x H x W, got {x.shape}")
    check_finite(grid, "sampling grid")
    H, W = x.shape[1:]
    out = np.zeros((x.shape[0],) + grid.shape[:2], dtype=np.float64)
    for (yi, xi), w in _bilinear_taps(grid, H, W):
        out += w * x[:, yi, xi]
    return out.astype(x.dtype)


def bilinear_sample_backward(grad, x, grid):
    """Gradient w.r.t. the sampled values (the grid is treated as constant)."""
    x, grid = _value(x), _value(grid)
    H, W = x.shape[1:]
    gx = np.zeros(x.shape, dtype=np.float64)
    c = x.shape[0]
    for (yi, xi), w in _bilinear_taps(grid, H, W):
        flat = (yi * W + xi).ravel()
        contrib = (grad * w).reshape(c, -1)
        for ch in range(c):
            np.add.at(gx[ch].reshape(-1), flat, contrib[ch])
    return gx.astype(x.dtype)


def identity_grid(H, W, dtype=DTYPE) -> np.ndarray:
    """Normalized pixel-center coordinates, shape ``H x W x 2`` (x, y)."""
    xs = (2.0 * np.arange(W) + 1.0) / W - 1.0
    ys = (2.0 * np.arange(H) + 1.0) / H - 1.0
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx, gy], axis=-1).astype(dtype)


def relu(x):
    return np.maximum(x, 0)


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))
