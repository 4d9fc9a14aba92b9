"""Source-view selection: batch random / farthest-point sampling and streaming variants.

Every selector pins the first frame. Landmark features are the stacked
(x, y) coordinates of a frame's facial landmarks.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SelectionError(ValueError):
    pass


def _check_k(K, M):
    if K < 1:
        raise SelectionError(f"K must be at least 1, got {K}")
    if K > M:
        raise SelectionError(f"cannot select {K} views from {M} frames")


def random_select(M, K, seed=None):
    """Frame 0 plus ``K - 1`` distinct frames drawn uniformly from ``1..M-1``."""
    _check_k(K, M)
    rng = np.random.default_rng(seed)
    rest = rng.choice(np.arange(1, M), size=K - 1, replace=False) if K > 1 else []
    return sorted([0, *map(int, rest)])


def _features(track, normalize=False):
    X = np.asarray(track, dtype=np.float64)
    if X.ndim != 2:
        raise SelectionError(f"landmark track must be M x 2L, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise SelectionError("landmark track contains non-finite values")
    if normalize:
        # per-frame: remove the centroid and scale to unit RMS radius
        pts = X.reshape(len(X), -1, 2)
        pts = pts - pts.mean(axis=1, keepdims=True)
        rms = np.sqrt((pts ** 2).sum(axis=2).mean(axis=1))
        X = (pts / np.where(rms > 0, rms, 1.0)[:, None, None]).reshape(len(X), -1)
    return X


def fps_select(track, K, normalize=False):
    """Greedy farthest-point sampling on per-frame landmark vectors.

    Starts from frame 0, then repeatedly adds the frame whose distance to its
    nearest chosen frame is largest (lowest index wins ties).

    Parameters
    ----------
    track : array_like, shape (M, 2L)
        Stacked landmark coordinates per frame.
    K : int
        Number of views to select.
    normalize : bool
        Remove per-frame translation and scale before measuring distances.

    Returns
    -------
    list of int
        Selected frame indices, ascending.
    """
    X = _features(track, normalize)
    _check_k(K, len(X))
    chosen = [0]
    dist = np.linalg.norm(X - X[0], axis=1)
    dist[0] = -np.inf
    for _ in range(K - 1):
        nxt = int(np.argmax(dist))     # argmax returns the first maximum
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(X - X[nxt], axis=1))
        dist[chosen] = -np.inf
    return sorted(chosen)


def fps_min_distances(track, K, normalize=False):
    """Maximin distance achieved at each greedy step (length ``K - 1``)."""
    X = _features(track, normalize)
    chosen = [0]
    out = []
    for _ in range(K - 1):
        d = np.min(np.linalg.norm(X[:, None] - X[chosen][None], axis=2), axis=1)
        d[chosen] = -np.inf
        nxt = int(np.argmax(d))
        out.append(float(d[nxt]))
        chosen.append(nxt)
    return out


# -- streaming ---------------------------------------------------------------

@dataclass
class SelectionState:
    """Resident views of a streaming selector.

    ``chosen`` holds ``(frame_index, feature)`` pairs in admission order; the
    first entry is the pinned first frame.
    """

    capacity: int
    swap_budget: int = 0
    tau: float = 0.0
    seed: int | None = None
    chosen: list = field(default_factory=list)
    frames_seen: int = 0
    last_index: int | None = None
    swap_count: int = 0

    def __post_init__(self):
        if self.capacity < 1:
            raise SelectionError("capacity must be at least 1")
        if self.swap_budget < 0:
            raise SelectionError("swap budget must be non-negative")

    @property
    def indices(self):
        return [i for i, _ in self.chosen]

    @property
    def full(self):
        return len(self.chosen) >= self.capacity

    def _advance(self, frame_index):
        if self.last_index is not None and frame_index <= self.last_index:
            raise SelectionError(
                f"frame {frame_index} arrived after frame {self.last_index}")
        self.last_index = frame_index
        self.frames_seen += 1


@dataclass(frozen=True)
class SwapDecision:
    frame_index: int
    admitted: bool
    evicted: int | None = None
    objective: float | None = None

    def log_line(self):
        evicted = "-" if self.evicted is None else str(self.evicted)
        obj = "-" if self.objective is None else repr(self.objective)
        return f"frame={self.frame_index} admitted={int(self.admitted)} evicted={evicted} objective={obj}"


def reservoir_update(state: SelectionState, frame_index, rng, feature=None):
    """Uniform reservoir over every frame after the pinned first one.

    The ``t``-th non-pinned frame enters with probability ``(K - 1) / t``
    and replaces a uniformly chosen resident.
    """
    state._advance(frame_index)
    item = (int(frame_index), feature)
    if not state.chosen or not state.full:
        state.chosen.append(item)
        return state
    t = state.frames_seen - 1
    j = int(rng.integers(t))
    if j < state.capacity - 1:
        del state.chosen[1 + j]
        state.chosen.append(item)
    return state


def _min_pairwise(feats):
    if len(feats) < 2:
        return np.inf
    F = np.asarray(feats, dtype=np.float64)
    d = np.linalg.norm(F[:, None] - F[None], axis=2)
    return float(d[np.triu_indices(len(F), 1)].min())


def set_objective(state: SelectionState):
    """Minimum pairwise feature distance among the resident views."""
    return _min_pairwise([f for _, f in state.chosen])


def streaming_fps_update(state: SelectionState, frame_index, feature):
    """Admit until full, then swap in a frame only if it strictly widens the set.

    For a full reservoir every non-pinned resident is tried as the eviction
    victim; the best resulting minimum pairwise distance must exceed the
    current one by more than ``state.tau`` and a swap must remain in the
    budget.
    """
    state._advance(frame_index)
    feature = np.asarray(feature, dtype=np.float64)
    if not np.all(np.isfinite(feature)):
        raise SelectionError("feature contains non-finite values")
    if not state.full:
        state.chosen.append((int(frame_index), feature))
        return state, SwapDecision(int(frame_index), True, None, set_objective(state))
    current = set_objective(state)
    if state.swap_count >= state.swap_budget or state.capacity < 2:
        return state, SwapDecision(int(frame_index), False, None, current)
    feats = [f for _, f in state.chosen]
    best, victim = -np.inf, None
    for slot in range(1, len(feats)):
        trial = feats[:slot] + feats[slot + 1:] + [feature]
        obj = _min_pairwise(trial)
        if obj > best:
            best, victim = obj, slot
    if best > current + state.tau:
        evicted = state.chosen[victim][0]
        del state.chosen[victim]
        state.chosen.append((int(frame_index), feature))
        state.swap_count += 1
        return state, SwapDecision(int(frame_index), True, evicted, best)
    return state, SwapDecision(int(frame_index), False, None, current)


def append_swap_log(path, decision: SwapDecision):
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(decision.log_line() + "\n")

