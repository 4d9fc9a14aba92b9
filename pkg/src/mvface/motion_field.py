"""Keypoint-driven motion: coarse flow, refinement, and warp-and-mask transport."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor_core as tc
from .weights import require

N_KEYPOINTS = 10
DEFAULT_SIGMA = 0.1
DEFAULT_EPS_BG = 0.01


class KeypointError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class KeypointSet:
    """``N x 2`` keypoint coordinates (x, y) in normalized ``[-1, 1]`` space."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise KeypointError(f"keypoints must be N x 2, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise KeypointError("keypoint coordinates must be finite")
        if np.any(np.abs(pts) > 1.0):
            raise KeypointError("keypoint coordinates must lie in [-1, 1]")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def ingest(cls, points, n_keypoints=N_KEYPOINTS):
        """Build from detector output, clamping coordinates into range."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        if len(pts) != n_keypoints:
            raise KeypointError(f"expected {n_keypoints} keypoints, got {len(pts)}")
        if not np.all(np.isfinite(pts)):
            raise KeypointError("keypoint coordinates must be finite")
        return cls(np.clip(pts, -1.0, 1.0))

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        return isinstance(other, KeypointSet) and np.array_equal(self.points, other.points)

    def translated(self, delta):
        return KeypointSet(self.points + np.asarray(delta, dtype=np.float64))


def coarse_flow_at(positions, kp_target, kp_source, sigma=DEFAULT_SIGMA, eps_bg=DEFAULT_EPS_BG):
    """Evaluate the soft-assigned backward flow at arbitrary ``positions[..., 2]``.

    Each keypoint pulls nearby target positions by its source-minus-target
    translation with a Gaussian weight; a constant background weight carries
    the identity map.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    p = np.asarray(positions, dtype=np.float64)
    kt = _points(kp_target)
    ks = _points(kp_source)
    if kt.shape != ks.shape:
        raise KeypointError("source and target keypoint counts differ")
    diff = p[..., None, :] - kt                      # [..., N, 2]
    w = np.exp(-np.sum(diff * diff, axis=-1) / (2.0 * sigma * sigma))
    shift = np.einsum("...n,nd->...d", w, ks - kt)
    return p + shift / (np.sum(w, axis=-1) + eps_bg)[..., None]


def coarse_flow(kp_target, kp_source, extents, sigma=DEFAULT_SIGMA, eps_bg=DEFAULT_EPS_BG):
    """Dense ``H x W x 2`` backward flow for a target frame of the given extents."""
    H, W = extents
    if H < 2 or W < 2:
        raise ValueError(f"flow extents must be at least 2x2, got {H}x{W}")
    grid = tc.identity_grid(H, W, dtype=np.float64)
    return coarse_flow_at(grid, kp_target, kp_source, sigma, eps_bg).astype(tc.DTYPE)


def _points(kp):
    return kp.points if isinstance(kp, KeypointSet) else np.asarray(kp, dtype=np.float64)


class AnalyticMotion:
    """Pass-through refiner: keeps the coarse flow, marks everything visible."""

    def refine(self, coarse):
        return coarse, np.ones(coarse.shape[:2], dtype=tc.DTYPE)


class LearnedMotion:
    """Two-layer conv refiner with externally trained weights.

    Layer 0: 3x3 conv (2 -> hidden), ChannelNorm, relu.
    Layer 1: 3x3 conv (hidden -> 3), ChannelNorm.
    Output channels 0-1 are added to the coarse flow; channel 2 goes through
    the logistic function to become the occlusion map.
    """

    def __init__(self, conv0_w, conv0_b, norm0_scale, norm0_bias,
                 conv1_w, conv1_b, norm1_scale, norm1_bias):
        self.conv0_w, self.conv0_b = conv0_w, conv0_b
        self.norm0 = (norm0_scale, norm0_bias)
        self.conv1_w, self.conv1_b = conv1_w, conv1_b
        self.norm1 = (norm1_scale, norm1_bias)
        if conv0_w.shape[1] != 2 or conv1_w.shape[0] != 3:
            raise ValueError("refiner must map 2 flow channels to 3 outputs")

    @classmethod
    def from_weights(cls, arrays, prefix="motion"):
        c0 = require(arrays, f"{prefix}.conv0.weight")
        hidden = c0.shape[0]
        return cls(
            c0,
            require(arrays, f"{prefix}.conv0.bias", (hidden,)),
            require(arrays, f"{prefix}.norm0.scale", (hidden,)),
            require(arrays, f"{prefix}.norm0.bias", (hidden,)),
            require(arrays, f"{prefix}.conv1.weight", (3, hidden, 3, 3)),
            require(arrays, f"{prefix}.conv1.bias", (3,)),
            require(arrays, f"{prefix}.norm1.scale", (3,)),
            require(arrays, f"{prefix}.norm1.bias", (3,)),
        )

    @classmethod
    def zeros(cls, hidden=8):
        z = np.zeros
        return cls(z((hidden, 2, 3, 3), tc.DTYPE), z(hidden, tc.DTYPE), z(hidden, tc.DTYPE),
                   z(hidden, tc.DTYPE), z((3, hidden, 3, 3), tc.DTYPE), z(3, tc.DTYPE),
                   z(3, tc.DTYPE), z(3, tc.DTYPE))

    def refine(self, coarse):
        H, W = coarse.shape[:2]
        disp = (coarse - tc.identity_grid(H, W)).transpose(2, 0, 1)
        h = tc.conv2d(disp, self.conv0_w, self.conv0_b)
        h = tc.relu(tc.channel_norm(h, *self.norm0))
        out = tc.conv2d(h, self.conv1_w, self.conv1_b)
        out = tc.channel_norm(out, *self.norm1)
        flow = coarse + out[:2].transpose(1, 2, 0)
        occ = tc.sigmoid(out[2]).astype(tc.DTYPE)
        return flow.astype(tc.DTYPE), occ


def refine_flow(coarse, backbone):
    """Refine a coarse flow; returns ``(flow, occlusion)``."""
    return backbone.refine(coarse)


def warp_and_mask(features, flow, occlusion):
    """Backward-warp ``features[c, H, W]`` by ``flow`` and multiply by ``occlusion``."""
    if flow.shape[:2] != features.shape[1:] or occlusion.shape != features.shape[1:]:
        raise tc.ShapeError(
            f"flow {flow.shape[:2]} / occlusion {occlusion.shape} do not match "
            f"features {features.shape[1:]}")
    return tc.bilinear_sample(features, flow) * occlusion[None].astype(features.dtype)
