"""Fuse K warped per-view feature maps into one.

Two aggregators are provided:

* pooling: a shared stack of two residual blocks applied to every view,
  followed by max or mean over the view axis;
* cross-view self-attention: at every spatial location the K feature
  vectors attend to one another, two such blocks are stacked, and a shared
  per-view scoring head yields softmax weights used to average the
  original input features.

Both accept any number of views: no parameter shape depends on K.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor_core as tc
from .tensor_core import Parameter
from .weights import require

N_BLOCKS = 2


def stack_views(views) -> np.ndarray:
    """Stack per-view ``c x H x W`` maps into a ``K x c x H x W`` array."""
    views = [np.asarray(v) for v in views]
    if not views:
        raise tc.ShapeError("need at least one view")
    if any(v.shape != views[0].shape or v.ndim != 3 for v in views):
        raise tc.ShapeError("all views must share one c x H x W shape")
    return tc.check_finite(np.stack(views), "view features")


def _check_stack(stack):
    if stack.ndim != 4 or stack.shape[0] < 1:
        raise tc.ShapeError(f"view stack must be K x c x H x W, got {stack.shape}")


def _param(rng, shape, scale):
    return Parameter(tc.tensor(rng.normal(0.0, scale, size=shape)))


# -- self-attention ----------------------------------------------------------

@dataclass
class SABlock:
    wq: Parameter
    wk: Parameter
    wv: Parameter
    norm1_scale: Parameter
    norm1_bias: Parameter
    conv_weight: Parameter
    conv_bias: Parameter
    norm2_scale: Parameter
    norm2_bias: Parameter

    _names = ("wq", "wk", "wv", "norm1.scale", "norm1.bias",
              "conv.weight", "conv.bias", "norm2.scale", "norm2.bias")

    def parameters(self):
        return [self.wq, self.wk, self.wv, self.norm1_scale, self.norm1_bias,
                self.conv_weight, self.conv_bias, self.norm2_scale, self.norm2_bias]


@dataclass
class SAParams:
    """Weights of the attention aggregator (two blocks plus a scoring head)."""

    blocks: list
    score_weight: Parameter
    score_bias: Parameter
    eps: float = tc.CHANNEL_NORM_EPS

    def __post_init__(self):
        if len(self.blocks) != N_BLOCKS:
            raise ValueError(f"attention aggregator needs exactly {N_BLOCKS} blocks")
        c, d = self.blocks[0].wq.shape
        for b in self.blocks:
            shapes = [p.shape for p in b.parameters()]
            expected = [(c, d), (c, d), (c, c), (c,), (c,), (c, c, 3, 3), (c,), (c,), (c,)]
            if shapes != expected:
                raise tc.ShapeError(f"inconsistent attention block shapes {shapes}")
        k = self.score_weight.shape[-1]
        if self.score_weight.shape != (1, c, k, k) or self.score_bias.shape != (1,):
            raise tc.ShapeError("scoring head must be 1 x c x k x k with a scalar bias")

    @property
    def channels(self):
        return self.blocks[0].wq.shape[0]

    @property
    def attn_dim(self):
        return self.blocks[0].wq.shape[1]

    def parameters(self):
        out = [p for b in self.blocks for p in b.parameters()]
        return out + [self.score_weight, self.score_bias]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def __call__(self, stack):
        return sa_aggregate(stack, self)

    @classmethod
    def random(cls, c, d=None, rng=None, scale=0.5, score_kernel=3):
        rng = np.random.default_rng(rng)
        d = c if d is None else d
        blocks = []
        for _ in range(N_BLOCKS):
            blocks.append(SABlock(
                _param(rng, (c, d), scale), _param(rng, (c, d), scale),
                _param(rng, (c, c), scale),
                Parameter(tc.tensor(1.0 + rng.normal(0, 0.1, c))), _param(rng, (c,), 0.1),
                _param(rng, (c, c, 3, 3), scale / 3), _param(rng, (c,), 0.1),
                Parameter(tc.tensor(1.0 + rng.normal(0, 0.1, c))), _param(rng, (c,), 0.1),
            ))
        k = score_kernel
        return cls(blocks, _param(rng, (1, c, k, k), scale), _param(rng, (1,), 0.1))

    @classmethod
    def from_weights(cls, arrays, prefix="sa"):
        blocks = []
        for i in range(N_BLOCKS):
            vals = [Parameter(require(arrays, f"{prefix}.block{i}.{n}")) for n in SABlock._names]
            blocks.append(SABlock(*vals))
        return cls(blocks, Parameter(require(arrays, f"{prefix}.score.weight")),
                   Parameter(require(arrays, f"{prefix}.score.bias")))

    def to_weights(self, prefix="sa"):
        out = {}
        for i, b in enumerate(self.blocks):
            for n, p in zip(SABlock._names, b.parameters()):
                out[f"{prefix}.block{i}.{n}"] = p.value
        out[f"{prefix}.score.weight"] = self.score_weight.value
        out[f"{prefix}.score.bias"] = self.score_bias.value
        return out


def sa_attend_per_location(Z, wq, wk, wv):
    """Scaled dot-product attention among the K rows of ``Z[..., K, c]``.

    Leading axes index independent spatial locations.
    """
    A, _ = _attend(Z, wq, wk, wv)
    return A


def _attend(Z, wq, wk, wv):
    Z = tc.check_finite(np.asarray(Z), "attention input")
    wq, wk, wv = (tc._value(w) for w in (wq, wk, wv))
    if Z.shape[-1] != wq.shape[0] or wq.shape != wk.shape or wv.shape != (Z.shape[-1],) * 2:
        raise tc.ShapeError(
            f"attention shapes disagree: Z {Z.shape}, Wq {wq.shape}, Wk {wk.shape}, Wv {wv.shape}")
    d = wq.shape[1]
    Q = tc.matmul(Z, wq)
    K = tc.matmul(Z, wk)
    V = tc.matmul(Z, wv)
    scale = Z.dtype.type(1.0 / np.sqrt(d))
    logits = tc.matmul(Q, np.swapaxes(K, -1, -2)) * scale
    att = tc.softmax(logits, axis=-1)
    A = tc.matmul(att, V)
    return A, (Z, Q, K, V, att, scale)


def _attend_backward(gA, wq, wk, wv, cache):
    Z, Q, K, V, att, scale = cache
    g_att, gV = tc.matmul_backward(gA, att, V)
    g_logits = tc.softmax_backward(g_att, att, axis=-1) * scale
    gQ, gKt = tc.matmul_backward(g_logits, Q, np.swapaxes(K, -1, -2))
    gK = np.swapaxes(gKt, -1, -2)
    gZ = np.zeros_like(Z)
    grads = []
    for g, w in ((gQ, wq), (gK, wk), (gV, wv)):
        gz, gw = tc.matmul_backward(g, Z, tc._value(w))
        gZ += gz
        grads.append(gw)
    return gZ, grads


def _sa_block_forward(X, block, eps):
    # X: K x c x H x W; attention runs over K at each (h, w)
    Z = X.transpose(2, 3, 0, 1)
    A, att_cache = _attend(Z, block.wq, block.wk, block.wv)
    Y = X + A.transpose(2, 3, 0, 1)
    N1 = tc.channel_norm(Y, block.norm1_scale, block.norm1_bias, eps)
    C = tc.conv2d(N1, block.conv_weight, block.conv_bias)
    out = tc.channel_norm(C, block.norm2_scale, block.norm2_bias, eps)
    return out, (att_cache, Y, N1, C)


def _sa_block_backward(g_out, block, cache, eps):
    att_cache, Y, N1, C = cache
    gC, gs2, gb2 = tc.channel_norm_backward(g_out, C, block.norm2_scale, block.norm2_bias, eps)
    gN1, gk, gcb = tc.conv2d_backward(gC, N1, block.conv_weight)
    gY, gs1, gb1 = tc.channel_norm_backward(gN1, Y, block.norm1_scale, block.norm1_bias, eps)
    gZ, (gwq, gwk, gwv) = _attend_backward(
        gY.transpose(2, 3, 0, 1), block.wq, block.wk, block.wv, att_cache)
    gX = gY + gZ.transpose(2, 3, 0, 1)
    for p, g in zip(block.parameters(), (gwq, gwk, gwv, gs1, gb1, gk, gcb, gs2, gb2)):
        p.accumulate(g)
    return gX


def _weighted_view_sum(stack, weights):
    # fixed left-to-right accumulation over views
    out = stack[0] * weights[0][None]
    for k in range(1, stack.shape[0]):
        out = out + stack[k] * weights[k][None]
    return out


def _sa_forward(stack, params):
    stack = tc.check_finite(np.asarray(stack), "view stack")
    _check_stack(stack)
    if stack.shape[1] != params.channels:
        raise tc.ShapeError(
            f"stack has {stack.shape[1]} channels, aggregator expects {params.channels}")
    X = stack
    caches = []
    for block in params.blocks:
        X, cache = _sa_block_forward(X, block, params.eps)
        caches.append((X, cache))
    scores = tc.conv2d(X, params.score_weight, params.score_bias)[:, 0]
    weights = tc.softmax(scores, axis=0)
    out = _weighted_view_sum(stack, weights)
    return tc.check_finite(out, "attention output"), (caches, weights)


def sa_view_weights(stack, params):
    """Per-pixel softmax weights over views, shape ``K x H x W``."""
    return _sa_forward(stack, params)[1][1]


def sa_aggregate(stack, params: SAParams):
    """Attention-weighted average of the views in ``stack[K, c, H, W]``."""
    return _sa_forward(stack, params)[0]


def sa_aggregate_backward(grad, stack, params: SAParams):
    """Accumulate parameter gradients of ``sum(grad * sa_aggregate(stack))``.

    Returns the gradient w.r.t. ``stack``.
    """
    stack = np.asarray(stack)
    out, (caches, weights) = _sa_forward(stack, params)
    g_stack = weights[:, None] * grad[None]
    g_w = np.einsum("chw,kchw->khw", grad, stack)
    g_scores = tc.softmax_backward(g_w, weights, axis=0)[:, None]
    X_last = caches[-1][0]
    gX, g_sk, g_sb = tc.conv2d_backward(g_scores, X_last, params.score_weight)
    params.score_weight.accumulate(g_sk)
    params.score_bias.accumulate(g_sb)
    for i in reversed(range(len(params.blocks))):
        gX = _sa_block_backward(gX, params.blocks[i], caches[i][1], params.eps)
    return g_stack + gX


# -- pooling -----------------------------------------------------------------

@dataclass
class ResidualBlock:
    """x + norm1(conv1(relu(norm0(conv0(x)))))"""

    conv0_weight: np.ndarray
    conv0_bias: np.ndarray
    norm0_scale: np.ndarray
    norm0_bias: np.ndarray
    conv1_weight: np.ndarray
    conv1_bias: np.ndarray
    norm1_scale: np.ndarray
    norm1_bias: np.ndarray

    _names = ("conv0.weight", "conv0.bias", "norm0.scale", "norm0.bias",
              "conv1.weight", "conv1.bias", "norm1.scale", "norm1.bias")

    def arrays(self):
        return [getattr(self, n.replace(".", "_")) for n in self._names]

    def __call__(self, x, eps=tc.CHANNEL_NORM_EPS):
        h = tc.conv2d(x, self.conv0_weight, self.conv0_bias)
        h = tc.relu(tc.channel_norm(h, self.norm0_scale, self.norm0_bias, eps))
        h = tc.conv2d(h, self.conv1_weight, self.conv1_bias)
        return x + tc.channel_norm(h, self.norm1_scale, self.norm1_bias, eps)


@dataclass
class PoolParams:
    """Shared residual stack plus the pooling mode (``"max"`` or ``"mean"``)."""

    blocks: list
    mode: str = "max"
    eps: float = tc.CHANNEL_NORM_EPS

    def __post_init__(self):
        if self.mode not in ("max", "mean"):
            raise ValueError(f"invalid pooling mode {self.mode!r}")
        if len(self.blocks) != N_BLOCKS:
            raise ValueError(f"pooling aggregator needs exactly {N_BLOCKS} residual blocks")
        c = self.channels
        for b in self.blocks:
            shapes = [a.shape for a in b.arrays()]
            if shapes != [(c, c, 3, 3), (c,), (c,), (c,)] * 2:
                raise tc.ShapeError(f"inconsistent residual block shapes {shapes}")

    @property
    def channels(self):
        return self.blocks[0].conv0_weight.shape[0]

    def __call__(self, stack):
        return pool_aggregate(stack, self)

    @classmethod
    def identity(cls, c, mode="max"):
        """Zero conv kernels: every residual block passes its input through."""
        def block():
            z = lambda *s: np.zeros(s, tc.DTYPE)  # noqa: E731
            o = np.ones(c, tc.DTYPE)
            return ResidualBlock(z(c, c, 3, 3), z(c), o, z(c), z(c, c, 3, 3), z(c), o.copy(), z(c))
        return cls([block() for _ in range(N_BLOCKS)], mode)

    @classmethod
    def random(cls, c, mode="max", rng=None, scale=0.3):
        rng = np.random.default_rng(rng)
        r = lambda *s: tc.tensor(rng.normal(0, scale, s))  # noqa: E731
        blocks = [ResidualBlock(r(c, c, 3, 3), r(c), tc.tensor(1 + rng.normal(0, .1, c)), r(c),
                                r(c, c, 3, 3), r(c), tc.tensor(1 + rng.normal(0, .1, c)), r(c))
                  for _ in range(N_BLOCKS)]
        return cls(blocks, mode)

    @classmethod
    def from_weights(cls, arrays, mode="max", prefix="pool"):
        blocks = [ResidualBlock(*(require(arrays, f"{prefix}.res{i}.{n}")
                                  for n in ResidualBlock._names))
                  for i in range(N_BLOCKS)]
        return cls(blocks, mode)

    def to_weights(self, prefix="pool"):
        return {f"{prefix}.res{i}.{n}": a
                for i, b in enumerate(self.blocks)
                for n, a in zip(ResidualBlock._names, b.arrays())}


def pool_aggregate(stack, params: PoolParams):
    """Apply the shared residual stack per view, then pool across views."""
    stack = tc.check_finite(np.asarray(stack), "view stack")
    _check_stack(stack)
    if stack.shape[1] != params.channels:
        raise tc.ShapeError(
            f"stack has {stack.shape[1]} channels, aggregator expects {params.channels}")
    X = stack
    for block in params.blocks:
        X = block(X, params.eps)
    return tc.reduce(X, axis=0, mode=params.mode)
