"""Finite-difference gradient checks shared by the unit and acceptance suites."""
import numpy as np

from mvface import tensor_core as tc
from mvface.aggregation import SAParams, sa_aggregate, sa_aggregate_backward
from oracles import directional_fd, rel_err

H_FD = 1e-3
RTOL_FD = 1e-3


def _check_grad(loss, x, analytic, rng, h=H_FD):
    # probe along the analytic gradient: the derivative there is |g|, so the
    # float32 rounding of the forward outputs stays far below the tolerance;
    # a wrong g (scaled or with an extra component) changes the difference
    v = analytic.astype(np.float64)
    norm = np.linalg.norm(v)
    v = (v / norm if norm > 0 else rng.normal(size=x.shape)).astype(x.dtype)
    fd = directional_fd(loss, x, v, h)
    an = float(np.sum(analytic.astype(np.float64) * v))
    return rel_err(an, fd)


def _weighted(f, w):
    return lambda x: float(np.sum(f(x).astype(np.float64) * w))


def gradcheck_ops(seed):
    """Relative errors of every op's backward against central differences (float32)."""
    rng = np.random.default_rng(seed)
    errs = {}

    a = tc.tensor(rng.normal(size=(3, 4)))
    b = tc.tensor(rng.normal(size=(4, 2)))
    w = rng.normal(size=(3, 2))
    ga, gb = tc.matmul_backward(w, a, b)
    errs["matmul_a"] = _check_grad(_weighted(lambda t: tc.matmul(t, b), w), a, ga, rng)
    errs["matmul_b"] = _check_grad(_weighted(lambda t: tc.matmul(a, t), w), b, gb, rng)

    x = tc.tensor(rng.normal(size=(4, 5)))
    w = rng.normal(size=x.shape)
    y = tc.softmax(x, axis=1)
    errs["softmax"] = _check_grad(_weighted(lambda t: tc.softmax(t, axis=1), w), x,
                                  tc.softmax_backward(w, y, axis=1), rng)

    x = tc.tensor(rng.normal(size=(2, 4, 4)))
    k = tc.tensor(rng.normal(size=(2, 2, 3, 3)) * 0.5)
    bias = tc.tensor(rng.normal(size=2))
    w = rng.normal(size=(2, 4, 4))
    gx, gk, gbias = tc.conv2d_backward(w, x, k)
    errs["conv2d_x"] = _check_grad(_weighted(lambda t: tc.conv2d(t, k, bias), w), x, gx, rng)
    errs["conv2d_k"] = _check_grad(_weighted(lambda t: tc.conv2d(x, t, bias), w), k, gk, rng)
    errs["conv2d_b"] = _check_grad(_weighted(lambda t: tc.conv2d(x, k, t), w), bias, gbias, rng)

    x = tc.tensor(rng.normal(size=(4, 2, 2)))
    s = tc.tensor(1 + 0.3 * rng.normal(size=4))
    bb = tc.tensor(rng.normal(size=4))
    w = rng.normal(size=x.shape)
    gx, gs, gbb = tc.channel_norm_backward(w, x, s, bb)
    errs["channel_norm_x"] = _check_grad(_weighted(lambda t: tc.channel_norm(t, s, bb), w), x, gx, rng)
    errs["channel_norm_scale"] = _check_grad(_weighted(lambda t: tc.channel_norm(x, t, bb), w), s, gs, rng)
    errs["channel_norm_bias"] = _check_grad(_weighted(lambda t: tc.channel_norm(x, s, t), w), bb, gbb, rng)

    x = tc.tensor(rng.normal(size=(3, 4, 2)))
    w = rng.normal(size=(4, 2))
    errs["reduce_mean"] = _check_grad(_weighted(lambda t: tc.reduce(t, 0), w), x,
                                      tc.reduce_mean_backward(w, x, 0), rng)

    x = tc.tensor(rng.normal(size=(2, 4, 4)))
    grid = tc.tensor(rng.uniform(-1.2, 1.2, size=(4, 4, 2)))
    w = rng.normal(size=(2, 4, 4))
    errs["bilinear_sample"] = _check_grad(_weighted(lambda t: tc.bilinear_sample(t, grid), w), x,
                                          tc.bilinear_sample_backward(w, x, grid), rng)
    return errs


def sa_gradcheck(seed, c=2, K=2, size=2, dtype=np.float32, h=H_FD):
    """Relative error of the attention aggregator's gradient w.r.t. Wq, Wk, Wv.

    All six projection matrices (two blocks) are perturbed together along one
    direction; the analytic directional derivative is compared with the
    central difference of ``sum(w * sa_aggregate(stack))``.
    """
    rng = np.random.default_rng(seed)
    params = SAParams.random(c, rng=rng)
    for p in params.parameters():
        p.value = p.value.astype(dtype)
        p.grad = np.zeros_like(p.value)
    stack = rng.normal(size=(K, c, size, size)).astype(dtype)
    w = rng.normal(size=(c, size, size))
    slots = [getattr(b, n) for b in params.blocks for n in ("wq", "wk", "wv")]
    params.zero_grad()
    sa_aggregate_backward(w.astype(dtype), stack, params)
    g = np.concatenate([p.grad.ravel().astype(np.float64) for p in slots])
    origin = np.concatenate([p.value.ravel().astype(np.float64) for p in slots])

    def assign(flat):
        off = 0
        for p in slots:
            p.value = flat[off:off + p.value.size].reshape(p.value.shape).astype(dtype)
            off += p.value.size

    def loss(flat):
        assign(flat)
        return float(np.sum(sa_aggregate(stack, params).astype(np.float64) * w))

    try:
        err = _check_grad(loss, origin, g, rng, h)
    finally:
        assign(origin)
    return err
