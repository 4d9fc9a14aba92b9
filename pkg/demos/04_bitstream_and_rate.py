"""
What goes over the wire
=======================

A session sends its source views once, then 40 bytes of keypoints per
frame.  The one-time cost fades as the call goes on.
"""
import numpy as np

from mvface.bitstream import (RateLedger, SourceViewRecord, amortized_rate, decode_session,
                              encode_keypoints, encode_session)
from mvface.motion_field import KeypointSet

rng = np.random.default_rng(3)

kp = KeypointSet(np.full((10, 2), 0.1))
block = encode_keypoints(kp)
print("coordinate block:", len(block) * 8, "bits; first half-float", block[:2][::-1].hex())

# Two source views of 10 kB each (stand-ins for any still-image codec).
views = [SourceViewRecord.from_bytes(i, rng.bytes(10_000)) for i in (0, 30)]
frames = [(t, KeypointSet(rng.uniform(-1, 1, (10, 2)))) for t in range(250)]
data, ledger = encode_session(views, frames)
print("stream bytes:", len(data), "ledger bits / 8:", ledger.stream_bits / 8)

header, decoded, _ = decode_session(data)
err = max(np.abs(f.keypoints.points - kp.points).max() for (_, kp), f in zip(frames, decoded))
print("views:", [v.frame_index for v in header.views], "worst coordinate error:", err)

# Amortized rate at 25 fps: the view bits are spread over the whole call.
for n in (25, 250, 2_500, 25_000, 250_000):
    bpf, kbps = amortized_rate(ledger, n)
    print(f"{n:>7} frames: {bpf:9.2f} bits/frame, {kbps:7.3f} kbit/s")
print("keypoints alone:", amortized_rate(RateLedger(), 1)[1], "kbit/s")
