"""Reconstruction quality metrics on 8-bit images.

Images are ``C x H x W`` (or ``H x W``) arrays in 0..255.  Colour images are
scored per RGB channel and averaged, or on BT.601 luma when ``color="luma"``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

PEAK = 255.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
K1, K2 = 0.01, 0.03
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


class MetricError(ValueError):
    pass


def _planes(img, color):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img[None]
    if img.ndim != 3:
        raise MetricError(f"image must be C x H x W or H x W, got shape {img.shape}")
    if color == "luma":
        if img.shape[0] != 3:
            raise MetricError("luma conversion needs 3 channels")
        return (0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2])[None]
    if color != "rgb":
        raise MetricError(f"unknown colour mode {color!r}")
    return img


def _pair(a, b, color):
    a, b = _planes(a, color), _planes(b, color)
    if a.shape != b.shape:
        raise MetricError(f"image extents differ: {a.shape} vs {b.shape}")
    return a, b


def l1(a, b, color="rgb"):
    a, b = _pair(a, b, color)
    return float(np.mean(np.abs(a - b)))


def mse(a, b, color="rgb"):
    a, b = _pair(a, b, color)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, color="rgb"):
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    err = mse(a, b, color)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK * PEAK / err)


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(x, g):
    # separable 'valid' correlation over the last two axes
    n = len(g)
    rows = np.lib.stride_tricks.sliding_window_view(x, n, axis=-2)
    x = np.einsum("...hwk,k->...hw", rows, g)
    cols = np.lib.stride_tricks.sliding_window_view(x, n, axis=-1)
    return np.einsum("...hwk,k->...hw", cols, g)


def _ssim_terms(a, b, size):
    size = min(size, a.shape[-2], a.shape[-1])
    g = gaussian_window(size)
    c1, c2 = (K1 * PEAK) ** 2, (K2 * PEAK) ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    s_aa = _filter_valid(a * a, g) - mu_a * mu_a
    s_bb = _filter_valid(b * b, g) - mu_b * mu_b
    s_ab = _filter_valid(a * b, g) - mu_a * mu_b
    lum = (2 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
    cs = (2 * s_ab + c2) / (s_aa + s_bb + c2)
    # per plane means over the window positions
    return (lum * cs).mean(axis=(-2, -1)), cs.mean(axis=(-2, -1))


def ssim(a, b, color="rgb"):
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5), valid positions only.

    Planes smaller than the window use a window as large as the plane.
    """
    a, b = _pair(a, b, color)
    s, _ = _ssim_terms(a, b, SSIM_WINDOW)
    return float(s.mean())


def _halve(x):
    H, W = x.shape[-2] // 2 * 2, x.shape[-1] // 2 * 2
    x = x[..., :H, :W]
    return 0.25 * (x[..., 0::2, 0::2] + x[..., 0::2, 1::2] + x[..., 1::2, 0::2] + x[..., 1::2, 1::2])


def ms_ssim(a, b, color="rgb", weights=MS_SSIM_WEIGHTS):
    """Multi-scale SSIM over ``len(weights)`` dyadic scales.

    Contrast-structure terms are taken at every scale and luminance only at
    the coarsest; negative terms are clipped to zero before exponentiation.
    """
    a, b = _pair(a, b, color)
    n = len(weights)
    if min(a.shape[-2:]) < 2 ** (n - 1):
        raise MetricError(f"images must be at least {2 ** (n - 1)} pixels across for {n} scales")
    result = np.ones(a.shape[0])
    for j, w in enumerate(weights):
        s, cs = _ssim_terms(a, b, SSIM_WINDOW)
        term = s if j == n - 1 else cs
        result *= np.maximum(term, 0.0) ** w
        a, b = _halve(a), _halve(b)
    return float(result.mean())


# -- sequence reports --------------------------------------------------------

_FIELDS = ("l1", "psnr_db", "ssim", "ms_ssim")


@dataclass
class MetricReport:
    """Per-frame metric values and their sequence means."""

    per_frame: dict = field(default_factory=lambda: {k: [] for k in _FIELDS})
    color: str = "rgb"

    def mean(self, name):
        vals = self.per_frame[name]
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def l1(self):
        return self.mean("l1")

    @property
    def psnr_db(self):
        return self.mean("psnr_db")

    @property
    def ssim(self):
        return self.mean("ssim")

    @property
    def ms_ssim(self):
        return self.mean("ms_ssim")

    def to_dict(self):
        def enc(v):
            # JSON has no infinity; identical frames report the string "inf"
            # and metrics that were skipped become null
            if v == math.inf:
                return "inf"
            return None if math.isnan(v) else v

        out = {k: enc(self.mean(k)) for k in _FIELDS}
        out["per_frame"] = {k: [enc(v) for v in self.per_frame[k]] for k in _FIELDS}
        out["frames"] = len(self.per_frame["l1"])
        out["color"] = self.color
        return out

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), allow_nan=False, **kw)

    @classmethod
    def from_dict(cls, d):
        def dec(v):
            if v is None:
                return math.nan
            return math.inf if v == "inf" else float(v)

        return cls({k: [dec(v) for v in d["per_frame"][k]] for k in _FIELDS}, d.get("color", "rgb"))


def evaluate_sequences(ref, test, color="rgb", with_ms_ssim=None):
    """Score two equally long image sequences frame by frame.

    ``with_ms_ssim=None`` computes MS-SSIM only when the frames are large
    enough for all scales; skipped values are NaN (``null`` in JSON).
    """
    if len(ref) != len(test):
        raise MetricError(f"frame counts differ: {len(ref)} vs {len(test)}")
    report = MetricReport(color=color)
    if with_ms_ssim is None:
        min_side = 2 ** (len(MS_SSIM_WEIGHTS) - 1)
        with_ms_ssim = all(min(np.shape(a)[-2:]) >= min_side for a in ref)
    for a, b in zip(ref, test):
        report.per_frame["l1"].append(l1(a, b, color))
        report.per_frame["psnr_db"].append(psnr(a, b, color))
        report.per_frame["ssim"].append(ssim(a, b, color))
        report.per_frame["ms_ssim"].append(ms_ssim(a, b, color) if with_ms_ssim else float("nan"))
    return report
