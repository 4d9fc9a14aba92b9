"""
End to end: encode, reconstruct, score
======================================

The reference backbone (average-pool encoder, bilinear generator, pass-through
motion refiner) makes the whole pipeline run without trained weights.  The
numbers below therefore show the plumbing, not the quality of a trained
model.
"""
import numpy as np

from mvface.aggregation import PoolParams, SAParams
from mvface.bitstream import SourceViewRecord
from mvface.frames_io import png_bytes, to_uint8
from mvface.metrics import evaluate_sequences
from mvface.motion_field import KeypointSet
from mvface.pipeline import Backbone, precompute_views, reconstruct_sequence
from mvface.bitstream import encode_session
from mvface.rd import point_from_ledger, rd_curve

rng = np.random.default_rng(5)
H = W = 32

# A smooth synthetic "face" that slides right, with keypoints that follow it.
ys, xs = np.meshgrid((np.arange(H) + 0.5) / H, (np.arange(W) + 0.5) / W, indexing="ij")


def frame(shift):
    x = np.clip(xs - shift / 2, 0, 1)
    return np.stack([x, 0.5 * x + 0.5 * ys, ys]).astype(np.float32)


lattice = np.array([(x, y) for x in (-0.6, -0.2, 0.2, 0.6) for y in (-0.5, 0.0, 0.5)])[:10]
shifts = np.linspace(0, 0.15, 30)
video = [frame(s) for s in shifts]
kps = [KeypointSet(np.clip(lattice + [s, 0], -1, 1)) for s in shifts]

points = []
backbone = Backbone()
for K, views in ((1, [0]), (2, [0, 29])):
    records = [SourceViewRecord.from_bytes(v, png_bytes(to_uint8(video[v]))) for v in views]
    stream, ledger = encode_session(records, list(enumerate(kps)))
    bank = precompute_views([video[v] for v in views], backbone, [kps[v] for v in views], views)
    for name, agg in (("max", PoolParams.identity(3, "max")), ("sa", SAParams.random(3, rng=0))):
        out, _, _ = reconstruct_sequence(stream, bank, agg, backbone)
        report = evaluate_sequences([to_uint8(f) for f in video], [to_uint8(f) for f in out])
        label = f"K={K} {name}"
        print(f"{label:8s} psnr {report.psnr_db:6.2f} dB  ssim {report.ssim:.4f}  "
              f"l1 {report.l1:.2f}")
        points.append(point_from_ledger(ledger, len(kps), report.psnr_db, label))

csv_text, front = rd_curve(points, higher_is_better=True)
print(csv_text)
print("pareto front:", [p.label for p in front])
