"""Rate-distortion points, CSV export and Pareto fronts."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

from .bitstream import amortized_rate

CSV_COLUMNS = ("rate_kbps", "bits_per_frame", "metric", "label")
HIGHER_IS_BETTER = {"psnr_db": True, "ssim": True, "ms_ssim": True, "l1": False}


@dataclass(frozen=True)
class RDPoint:
    rate_kbps: float
    distortion: float
    label: str = ""
    bits_per_frame: float | None = None
    n_frames: int | None = None

    def __post_init__(self):
        if not self.rate_kbps > 0:
            raise ValueError(f"rate must be positive, got {self.rate_kbps}")


def point_from_ledger(ledger, n_frames, distortion, label="", fps=25.0):
    bpf, kbps = amortized_rate(ledger, n_frames, fps)
    return RDPoint(kbps, distortion, label, bpf, n_frames)


def pareto_front(points, higher_is_better=False):
    """Points not dominated in (lower rate, better distortion); duplicates collapse."""
    if not points:
        raise ValueError("need at least one RD point")
    sign = -1.0 if higher_is_better else 1.0
    ordered = sorted(points, key=lambda p: (p.rate_kbps, sign * p.distortion))
    front, best = [], None
    for p in ordered:
        d = sign * p.distortion
        if best is None or d < best:
            front.append(p)
            best = d
    return front


def rd_curve(points, higher_is_better=False):
    """Sorted CSV text (``CSV_COLUMNS``) and the Pareto-optimal subset."""
    if not points:
        raise ValueError("need at least one RD point")
    sign = -1.0 if higher_is_better else 1.0
    ordered = sorted(points, key=lambda p: (p.rate_kbps, sign * p.distortion, p.label))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for p in ordered:
        bpf = "" if p.bits_per_frame is None else repr(p.bits_per_frame)
        writer.writerow([repr(p.rate_kbps), bpf, repr(p.distortion), p.label])
    return buf.getvalue(), pareto_front(points, higher_is_better)
