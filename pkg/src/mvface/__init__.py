"""Multi-view neural face video compression, desk scale.

Keypoint-driven warping of several source views, cross-view aggregation,
source-view selection, a keypoint bitstream with rate accounting, and
rate-distortion evaluation.
"""
from .aggregation import PoolParams, SAParams, pool_aggregate, sa_aggregate, stack_views
from .bitstream import (
    RateLedger, SessionHeader, SourceViewRecord, amortized_rate, decode_frame,
    decode_session, encode_frame, encode_session,
)
from .metrics import MetricReport, evaluate_sequences
from .motion_field import KeypointSet, coarse_flow, refine_flow, warp_and_mask
from .pipeline import Backbone, precompute_views, reconstruct, reconstruct_sequence
from .view_selection import (
    SelectionState, fps_select, random_select, reservoir_update, streaming_fps_update,
)

__version__ = "0.1.0"
