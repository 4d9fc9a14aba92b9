"""
Fusing several source views
===========================

Each source view is warped towards the target separately.  The aggregator
then merges the K warped feature maps into one.  Two kinds are available:
pooling (max or mean after a shared residual stack) and per-pixel attention
across views.
"""
import itertools

import numpy as np

from mvface.aggregation import PoolParams, SAParams, sa_view_weights, stack_views

rng = np.random.default_rng(1)
c, H, W = 4, 6, 6
views = [rng.normal(size=(c, H, W)).astype(np.float32) for _ in range(3)]
stack = stack_views(views)
print("stack shape (K, c, H, W):", stack.shape)

# Pooling with pass-through residual blocks is plain pooling.
max_pool = PoolParams.identity(c, "max")
print("identity max-pool equals np.max:", np.array_equal(max_pool(stack), stack.max(axis=0)))

# Attention: views look at each other at every pixel, then a shared scoring
# head turns each view's features into a weight.
sa = SAParams.random(c, rng=rng)
weights = sa_view_weights(stack, sa)
print("per-pixel view weights at (0, 0):", weights[:, 0, 0].round(3),
      "sum", float(weights[:, 0, 0].sum()))

# Neither aggregator cares about the order in which the views arrive.
fused = sa(stack)
spread = max(np.abs(sa(stack[list(p)]) - fused).max() for p in itertools.permutations(range(3)))
print("largest change over all view orders:", float(spread))

# No parameter depends on K, so the same weights handle any view count.
for K in (1, 2, 5):
    print(f"K={K}: output shape", sa(rng.normal(size=(K, c, H, W)).astype(np.float32)).shape)
