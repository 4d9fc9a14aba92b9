"""Acceptance criteria, one test each.

Every test records a ``PASS``/``FAIL``/``SKIP`` line; the lines are printed in
the pytest terminal summary, or directly when this file is run as a script.
"""
import math
import time

import numpy as np
import pytest

from mvface import h264
from mvface.bitstream import COORDS_PER_FRAME, RateLedger, amortized_rate, encode_frame
from mvface.aggregation import SAParams, sa_aggregate
from mvface.metrics import ms_ssim, psnr, ssim
from mvface.motion_field import KeypointSet
from checks import RTOL_FD, gradcheck_ops, sa_gradcheck
from conftest import ACCEPTANCE_LINES
from oracles import sa_aggregate_loops
from test_aggregation import permutation_spread
from test_bitstream import coordinate_bit_mismatches
from test_h264 import command_matches_template, crf_sweep_rates
from test_metrics import metric_oracle_gaps
from test_pipeline import pipeline_identity_gaps
from test_view_selection import fps_oracle_mismatches, reservoir_frequencies, streaming_violations

COMPETITOR_FLOATS = 60


def verdict(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_01_rate_exactness():
    t0 = time.perf_counter()
    bad = coordinate_bit_mismatches(1000)
    dt = time.perf_counter() - t0
    verdict(1, bad == 0 and dt < 1.0,
            f"1000 frames, {bad} differ from the binary16 oracle, 320 bits each, {dt:.3f} s")


def test_criterion_02_float_count():
    payload = encode_frame(KeypointSet(np.zeros((10, 2))), 0)[4:]
    n = len(payload) // 2
    verdict(2, n == 20 and COORDS_PER_FRAME == 20 and n < COMPETITOR_FLOATS,
            f"{n} floats per frame (vs {COMPETITOR_FLOATS})")


def test_criterion_03_permutation_invariance():
    t0 = time.perf_counter()
    worst = {"max": 0.0, "mean": 0.0, "sa": 0.0}
    for seed in range(20):
        for k, v in permutation_spread(seed).items():
            worst[k] = max(worst[k], v)
    dt = time.perf_counter() - t0
    ok = worst["max"] == 0.0 and worst["mean"] <= 1e-5 and worst["sa"] <= 1e-5 and dt < 10
    verdict(3, ok, f"6 orderings x 20 seeds, max dev max={worst['max']:.1e} "
                   f"mean={worst['mean']:.1e} sa={worst['sa']:.1e}, {dt:.2f} s")


def sa_oracle_deviation(seeds, dtype):
    worst = 0.0
    for seed in seeds:
        rng = np.random.default_rng(seed)
        params = SAParams.random(2, rng=rng)
        for p in params.parameters():
            p.value = p.value.astype(dtype)
        stack = rng.normal(size=(2, 2, 2, 2)).astype(np.float32).astype(dtype)
        worst = max(worst, float(np.max(np.abs(sa_aggregate(stack, params)
                                               - sa_aggregate_loops(stack, params)))))
    return worst


def test_criterion_04_sa_oracle():
    # the oracle evaluates in 64-bit; the comparison runs the aggregator at
    # the same precision so it measures the formula, not 32-bit rounding
    worst = sa_oracle_deviation(range(100), np.float64)
    worst32 = sa_oracle_deviation(range(100), np.float32)
    verdict(4, worst <= 1e-6, f"100 seeds, max abs deviation {worst:.2e} "
                              f"(32-bit evaluation: {worst32:.2e})")


def test_criterion_05_gradient_checks():
    t0 = time.perf_counter()
    op_fail = {}
    for seed in range(100):
        for name, err in gradcheck_ops(seed).items():
            if err > RTOL_FD:
                op_fail[name] = op_fail.get(name, 0) + 1
    sa32 = [sa_gradcheck(s, c=2, K=2, size=2, dtype=np.float32) for s in range(100)]
    sa64 = [sa_gradcheck(s, c=2, K=2, size=2, dtype=np.float64) for s in range(100)]
    dt = time.perf_counter() - t0
    sa_fail = sum(e > RTOL_FD for e in sa64)
    ok = not op_fail and sa_fail == 0 and dt < 30
    verdict(5, ok, f"ops: {sum(op_fail.values())} failures over 100 seeds {op_fail or ''}; "
                   f"sa_aggregate Wq/Wk/Wv (c=2, K=2, 2x2, h=1e-3, 64-bit): {sa_fail}/100 "
                   f"seeds above {RTOL_FD:g} (32-bit: {sum(e > RTOL_FD for e in sa32)}/100); "
                   f"{dt:.1f} s")


def test_criterion_06_fps_oracle():
    bad = fps_oracle_mismatches(range(500))
    verdict(6, not bad, f"500 instances (M<=12, K<=8), {len(bad)} mismatches")


def test_criterion_07_reservoir_uniformity():
    trials, M, K = 100_000, 20, 3
    t0 = time.perf_counter()
    counts = reservoir_frequencies(trials, M, K)
    dt = time.perf_counter() - t0
    p = (K - 1) / (M - 1)
    sigma = math.sqrt(trials * p * (1 - p))
    z = np.abs(counts[1:] - trials * p) / sigma
    verdict(7, bool(np.all(z <= 3)) and counts[0] == trials and dt < 20,
            f"{trials} trials, worst |z| {z.max():.2f} (limit 3), {dt:.1f} s")


def test_criterion_08_streaming_fps_monotone():
    bad = streaming_violations(1000)
    verdict(8, bad == 0, f"1000 streams, {bad} with a decrease after fill or a budget overrun")


def test_criterion_09_pipeline_identity():
    rng = np.random.default_rng(9)
    exact, worst = True, 0.0
    for _ in range(20):
        ok, gap = pipeline_identity_gaps(rng)
        exact &= ok
        worst = max(worst, gap)
    verdict(9, exact and worst <= 1e-5,
            f"identity path bit-exact: {exact}; K identical vs K=1 max gap {worst:.1e}")


def test_criterion_10_amortization():
    ledger = RateLedger(source_view_bits=80_000)
    ns = sorted(set(range(1, 2001)) | set(np.geomspace(1, 10**6, 500).astype(int).tolist()))
    prev, strict, exact = math.inf, True, True
    for n in ns:
        bpf, kbps = amortized_rate(ledger, n)
        exact &= bpf == (80_000 + n * 320) / n and kbps == bpf * 25 / 1000
        strict &= bpf < prev
        prev = bpf
    gap = prev - 320
    verdict(10, strict and exact and 0 < gap <= 0.1,
            f"strictly decreasing: {strict}, closed form exact: {exact}, "
            f"bits/frame at 1e6 frames = 320 + {gap:.3f}")


def test_criterion_11_metrics():
    rng = np.random.default_rng(11)
    a = rng.integers(0, 255, (3, 32, 32))
    p_err = abs(psnr(a, a + 1) - 20 * math.log10(255))
    img = rng.integers(0, 256, (3, 48, 48))
    self_err = max(abs(ssim(img, img) - 1), abs(ms_ssim(img, img) - 1))
    oracle = max(max(metric_oracle_gaps(s).values()) for s in range(5))
    verdict(11, p_err <= 1e-9 and self_err <= 1e-6 and oracle <= 1e-6,
            f"psnr error {p_err:.1e} dB, self-similarity error {self_err:.1e}, "
            f"oracle gap {oracle:.1e}")


@pytest.mark.ffmpeg
def test_criterion_12_h264(tmp_path):
    verbatim = command_matches_template()
    if h264.find_ffmpeg() is None:
        line = (f"SKIP criterion 12: command template verbatim: {verbatim}; "
                "CRF sweep needs an ffmpeg binary, none found")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert verbatim
        pytest.skip("ffmpeg is not installed")
    from mvface.frames_io import write_y4m
    rng = np.random.default_rng(0)
    base = rng.integers(0, 256, (3, 64, 64))
    write_y4m(tmp_path / "clip.y4m", [np.roll(base, t, axis=2).astype(np.uint8)
                                      for t in range(10)])
    rates = crf_sweep_rates(tmp_path / "clip.y4m")
    monotone = all(b >= a for a, b in zip(rates, rates[1:]))
    verdict(12, verbatim and monotone,
            f"command verbatim: {verbatim}; kbps at CRF 40..25: "
            + ", ".join(f"{r:.1f}" for r in rates))


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
