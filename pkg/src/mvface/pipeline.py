"""End-to-end multi-view reconstruction.

Per target frame: for every source view, keypoints give a coarse flow, the
motion backbone refines it and predicts occlusion, cached view features are
warped and masked, the aggregator fuses the views, and the generator maps the
fused features back to an image.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import tensor_core as tc
from .aggregation import stack_views
from .bitstream import RateLedger, iter_frames, unpack_header
from .motion_field import (
    DEFAULT_EPS_BG, DEFAULT_SIGMA, AnalyticMotion, LearnedMotion,
    coarse_flow, refine_flow, warp_and_mask,
)
from .weights import require


def downsample2x(image):
    """2x2 average pooling of a ``c x H x W`` array (H and W even)."""
    c, H, W = image.shape
    if H % 2 or W % 2:
        raise tc.ShapeError(f"extents must be even for 2x downsampling, got {H}x{W}")
    x = image.reshape(c, H // 2, 2, W // 2, 2)
    return ((x[:, :, 0, :, 0] + x[:, :, 0, :, 1]) + (x[:, :, 1, :, 0] + x[:, :, 1, :, 1])) * \
        image.dtype.type(0.25)


def upsample2x(features):
    """Bilinear 2x upsampling with edge clamping."""
    c, H, W = features.shape
    return tc.bilinear_sample(features, tc.identity_grid(2 * H, 2 * W))


class AnalyticEncoder:
    factor = 2

    def __call__(self, image):
        return downsample2x(image)


class AnalyticGenerator:
    factor = 2

    def __call__(self, features):
        return upsample2x(features)


class LearnedEncoder:
    """3x3 conv (3 -> c), ChannelNorm, relu, then 2x average pooling."""

    factor = 2

    def __init__(self, weight, bias, norm_scale, norm_bias):
        self.weight, self.bias = weight, bias
        self.norm = (norm_scale, norm_bias)

    @property
    def channels(self):
        return self.weight.shape[0]

    def __call__(self, image):
        h = tc.conv2d(image, self.weight, self.bias)
        return downsample2x(tc.relu(tc.channel_norm(h, *self.norm)))


class LearnedGenerator:
    """2x bilinear upsampling followed by a 3x3 conv (c -> 3)."""

    factor = 2

    def __init__(self, weight, bias):
        self.weight, self.bias = weight, bias

    def __call__(self, features):
        return tc.conv2d(upsample2x(features), self.weight, self.bias)


@dataclass
class Backbone:
    encoder: object = field(default_factory=AnalyticEncoder)
    generator: object = field(default_factory=AnalyticGenerator)
    motion: object = field(default_factory=AnalyticMotion)
    sigma: float = DEFAULT_SIGMA
    eps_bg: float = DEFAULT_EPS_BG

    def __post_init__(self):
        if self.encoder.factor != self.generator.factor:
            raise ValueError("encoder and generator resolution factors must match")

    @classmethod
    def from_weights(cls, arrays, **kw):
        c = require(arrays, "encoder.conv0.weight")
        n = c.shape[0]
        enc = LearnedEncoder(c, require(arrays, "encoder.conv0.bias", (n,)),
                             require(arrays, "encoder.norm0.scale", (n,)),
                             require(arrays, "encoder.norm0.bias", (n,)))
        gen = LearnedGenerator(require(arrays, "generator.conv0.weight", (3, n, 3, 3)),
                               require(arrays, "generator.conv0.bias", (3,)))
        return cls(enc, gen, LearnedMotion.from_weights(arrays), **kw)


@dataclass
class SourceViewBank:
    """Source views with their keypoints and features, computed once."""

    views: list
    keypoints: list
    features: list
    frame_indices: list
    encode_calls: int = 0

    def __len__(self):
        return len(self.views)

    @property
    def channels(self):
        return self.features[0].shape[0]

    def permuted(self, order):
        return SourceViewBank([self.views[i] for i in order], [self.keypoints[i] for i in order],
                              [self.features[i] for i in order],
                              [self.frame_indices[i] for i in order], self.encode_calls)


def precompute_views(views, backbone: Backbone, kp_source_list, frame_indices=None):
    """Encode each source view once and cache it with its keypoints."""
    views = [tc.check_finite(np.asarray(v, dtype=tc.DTYPE), "source view") for v in views]
    if not views:
        raise ValueError("need at least one source view")
    if any(v.shape != views[0].shape or v.ndim != 3 for v in views):
        raise tc.ShapeError("source views must share one 3 x H x W shape")
    if len(kp_source_list) != len(views):
        raise ValueError("one keypoint set per source view is required")
    bank = SourceViewBank(views, list(kp_source_list), [],
                          list(frame_indices) if frame_indices is not None else list(range(len(views))))
    for v in views:
        bank.features.append(backbone.encoder(v))
        bank.encode_calls += 1
    return bank


def reconstruct(bank: SourceViewBank, kp_target, aggregator, backbone: Backbone):
    """Reconstruct one ``3 x H x W`` frame in ``[0, 1]`` from its keypoints."""
    if getattr(aggregator, "channels", bank.channels) != bank.channels:
        raise tc.ShapeError(
            f"bank features have {bank.channels} channels, aggregator expects {aggregator.channels}")
    extents = bank.features[0].shape[1:]
    warped = []
    for feats, kp_src in zip(bank.features, bank.keypoints):
        flow = coarse_flow(kp_target, kp_src, extents, backbone.sigma, backbone.eps_bg)
        flow, occ = refine_flow(flow, backbone.motion)
        warped.append(warp_and_mask(feats, flow, occ))
    fused = aggregator(stack_views(warped))
    return np.clip(backbone.generator(fused), 0.0, 1.0).astype(tc.DTYPE)


def reconstruct_sequence(stream, bank, aggregator, backbone, workers=1):
    """Decode an mvfc byte stream and reconstruct every transmitted frame.

    Returns ``(frames, frame_indices, ledger)``.  A malformed payload raises
    :class:`~mvface.bitstream.StreamDecodeError` carrying its position in the stream.
    """
    header, pos = unpack_header(stream)
    ledger = RateLedger()
    ledger.record_header(header)
    payloads = []
    for p in iter_frames(stream, pos):
        payloads.append(p)
        ledger.record_frame()
    kps = [p.keypoints for p in payloads]

    def one(kp):
        return reconstruct(bank, kp, aggregator, backbone)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            frames = list(pool.map(one, kps))
    else:
        frames = [one(kp) for kp in kps]
    return frames, [p.frame_index for p in payloads], ledger

