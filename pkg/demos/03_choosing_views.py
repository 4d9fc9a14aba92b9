"""
Which frames should be source views?
====================================

Batch selection sees the whole clip; streaming selection has to decide as
frames arrive.  Every strategy keeps the first frame.
"""
import numpy as np

from mvface.view_selection import (SelectionState, fps_min_distances, fps_select,
                                   random_select, reservoir_update, streaming_fps_update)

rng = np.random.default_rng(2)

# A synthetic landmark track: a head that turns left, then right.
M, L = 60, 5
angle = np.concatenate([np.linspace(0, -1, 20), np.linspace(-1, 1, 40)])
base = rng.normal(size=(L, 2))
track = np.stack([(base + [a, 0.1 * a * a]).ravel() for a in angle])
track += rng.normal(0, 0.02, track.shape)          # detector jitter

print("random :", random_select(M, 4, seed=0))
print("fps    :", fps_select(track, 4))
print("maximin distance per greedy step:", np.round(fps_min_distances(track, 4), 3))

# Reservoir sampling keeps a uniform sample of everything after frame 0.
state = SelectionState(4)
for t in range(M):
    reservoir_update(state, t, rng)
print("reservoir:", sorted(state.indices))

# Streaming FPS only swaps a view in when the set gets strictly more diverse,
# and at most swap_budget times.  Each swap costs another source view.
def run_streaming(frame_ids):
    state = SelectionState(4, swap_budget=3, tau=0.05)
    for t in frame_ids:
        state, decision = streaming_fps_update(state, int(t), track[t])
        if decision.evicted is not None:
            print("  ", decision.log_line())
    return state


# Fed every frame, the reservoir fills with four near-identical neighbours.
# One swap removes only one of them, the remaining close pairs keep the
# minimum distance where it was, and no swap ever qualifies.
state = run_streaming(range(M))
print("streaming fps, every frame:", sorted(state.indices), "swaps:", state.swap_count)

# Considering every sixth frame gives the rule room to work.
state = run_streaming(range(0, M, 6))
print("streaming fps, every 6th frame:", sorted(state.indices), "swaps:", state.swap_count)
