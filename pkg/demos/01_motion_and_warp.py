"""
Keypoints to motion
===================

Ten keypoints per frame are all the decoder learns about a new frame.  This
walk-through turns a pair of keypoint sets into a dense backward flow and
uses it to warp a feature map.
"""
import numpy as np

from mvface import tensor_core as tc
from mvface.motion_field import KeypointSet, coarse_flow, coarse_flow_at, warp_and_mask

rng = np.random.default_rng(0)

# A source frame's keypoints, and the same face shifted a little to the right
# in the target frame.
lattice = np.array([(x, y) for x in (-0.6, -0.2, 0.2, 0.6) for y in (-0.5, 0.0, 0.5)])[:10]
kp_source = KeypointSet(lattice)
kp_target = kp_source.translated([0.125, 0.0])

# The flow is a backward map: for every target pixel it says where to sample
# the source.  With the whole face moved right, target pixels look left.
flow = coarse_flow(kp_target, kp_source, (16, 16))
disp = flow - tc.identity_grid(16, 16)
print("mean displacement (x, y):", disp.reshape(-1, 2).mean(axis=0).round(4))

# At a keypoint the displacement is (almost) exactly the keypoint motion.
# The small shortfall is the constant background weight.
at_kp = coarse_flow_at(kp_target.points[0], kp_target, kp_source) - kp_target.points[0]
print("displacement at keypoint 0:", at_kp.round(5))

# Far from every keypoint the background weight wins and the map is identity.
corner = coarse_flow_at(np.array([-1.0, -1.0]), kp_target, kp_source, sigma=0.05)
print("corner sample position:", corner.round(5))

# Warping: a horizontal ramp moves along with the keypoints.
ramp = np.tile(np.linspace(0, 1, 16, dtype=np.float32), (1, 16, 1))
warped = warp_and_mask(ramp, flow, np.ones((16, 16), np.float32))
print("ramp row before:", ramp[0, 8, :6].round(3))
print("ramp row after: ", warped[0, 8, :6].round(3))

# An occlusion mask simply scales the warped features.
half = np.full((16, 16), 0.5, np.float32)
print("masked max:", float(warp_and_mask(ramp, flow, half).max()))
