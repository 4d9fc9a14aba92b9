"""Command line: ``python -m mvface <command> ...``."""
from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import bitstream, frames_io, h264, metrics, rd, view_selection
from .aggregation import PoolParams, SAParams
from .pipeline import Backbone, precompute_views, reconstruct_sequence
from .weights import load_weights

CONFIG_DEFAULTS = {"sigma": 0.1, "eps_bg": 0.01, "d": None, "tau": 0.0,
                   "swap_budget": 0, "fps": 25.0}
_CONFIG_TYPES = {"sigma": float, "eps_bg": float, "d": int, "tau": float,
                 "swap_budget": int, "fps": float}


def read_config(path):
    """Parse ``key=value`` lines; unknown keys are an error."""
    cfg = dict(CONFIG_DEFAULTS)
    if path is None:
        return cfg
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep or key not in _CONFIG_TYPES:
            raise ValueError(f"{path}:{lineno}: unknown config entry {line!r}")
        cfg[key] = _CONFIG_TYPES[key](value)
    return cfg


def _emit(text, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


# -- commands ----------------------------------------------------------------

def cmd_select_views(args, cfg):
    idx, X = frames_io.read_landmarks(args.landmarks)
    if args.strategy == "random":
        rows = view_selection.random_select(len(X), args.k, seed=args.seed)
    elif args.strategy == "fps":
        rows = view_selection.fps_select(X, args.k, normalize=args.normalize)
    else:
        state = view_selection.SelectionState(args.k, swap_budget=cfg["swap_budget"],
                                              tau=cfg["tau"], seed=args.seed)
        rng = np.random.default_rng(args.seed)
        for row, feat in enumerate(X):
            if args.strategy == "reservoir":
                view_selection.reservoir_update(state, row, rng)
            else:
                state, decision = view_selection.streaming_fps_update(state, row, feat)
                if args.swap_log:
                    view_selection.append_swap_log(args.swap_log, decision)
        rows = sorted(state.indices)
    print(" ".join(str(idx[r]) for r in rows))


def cmd_encode(args, cfg):
    frames = frames_io.read_frames(args.frames)
    kps = frames_io.read_keypoints(args.keypoints)
    views = [int(v) for v in args.views.split(",")]
    for v in views:
        if not 0 <= v < len(frames):
            raise ValueError(f"view frame {v} is outside the {len(frames)}-frame input")
    records = [bitstream.SourceViewRecord.from_bytes(v, frames_io.png_bytes(frames[v]))
               for v in views]
    data, ledger = bitstream.encode_session(records, kps)
    Path(args.output).write_bytes(data)
    bpf, kbps = bitstream.amortized_rate(ledger, max(ledger.frames_sent, 1), cfg["fps"])
    print(json.dumps({**ledger.as_dict(), "bits_per_frame": bpf, "rate_kbps": kbps}))


def _aggregator(name, arrays, channels, cfg, seed=0):
    if name == "sa":
        if arrays is not None:
            return SAParams.from_weights(arrays)
        return SAParams.random(channels, d=cfg["d"], rng=seed)
    if arrays is not None:
        return PoolParams.from_weights(arrays, mode=name)
    return PoolParams.identity(channels, mode=name)


def cmd_decode(args, cfg):
    data = Path(args.stream).read_bytes()
    header, frames, _ = bitstream.decode_session(data)
    sent = {f.frame_index: f.keypoints for f in frames}
    extra = dict(frames_io.read_keypoints(args.view_keypoints)) if args.view_keypoints else {}
    views, view_kps = [], []
    for rec in header.views:
        views.append(frames_io.to_float(frames_io.png_decode(rec.payload)))
        kp = extra.get(rec.frame_index, sent.get(rec.frame_index))
        if kp is None:
            raise ValueError(f"no keypoints for source view at frame {rec.frame_index}")
        view_kps.append(kp)
    arrays = load_weights(args.weights) if args.weights else None
    backbone = (Backbone.from_weights(arrays, sigma=cfg["sigma"], eps_bg=cfg["eps_bg"])
                if arrays is not None else Backbone(sigma=cfg["sigma"], eps_bg=cfg["eps_bg"]))
    bank = precompute_views(views, backbone, view_kps, [r.frame_index for r in header.views])
    agg = _aggregator(args.aggregator, arrays, bank.channels, cfg, args.seed)
    out, _, ledger = reconstruct_sequence(data, bank, agg, backbone)
    out = [frames_io.to_uint8(f) for f in out]
    if args.png:
        frames_io.write_png_dir(args.output, out)
    else:
        frames_io.write_raw_frames(args.output, out)
    print(json.dumps(ledger.as_dict()))


def cmd_evaluate(args, cfg):
    ref = frames_io.read_frames(args.reference)
    test = frames_io.read_frames(args.test)
    report = metrics.evaluate_sequences(ref, test, color=args.color)
    out = report.to_dict()
    if args.stream:
        _, frames, ledger = bitstream.decode_session(Path(args.stream).read_bytes())
        bpf, kbps = bitstream.amortized_rate(ledger, max(len(frames), 1), cfg["fps"])
        out["rate"] = {"bits_per_frame": bpf, "rate_kbps": kbps, "n_frames": len(frames)}
    if args.label:
        out["label"] = args.label
    _emit(json.dumps(out, allow_nan=False, indent=2), args.output)


def _load_point(path, metric):
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    if "rate" not in d:
        raise ValueError(f"{path}: report has no 'rate' entry (evaluate with --stream)")
    value = d[metric]
    if value == "inf":
        value = float("inf")
    r = d["rate"]
    return rd.RDPoint(float(r["rate_kbps"]), float(value), d.get("label", Path(path).stem),
                      float(r["bits_per_frame"]), r.get("n_frames"))


def cmd_rd_curve(args, cfg):
    points = [_load_point(p, args.metric) for p in args.reports]
    text, front = rd.rd_curve(points, rd.HIGHER_IS_BETTER[args.metric])
    _emit(text, args.output)
    if args.front:
        ftext, _ = rd.rd_curve(front, rd.HIGHER_IS_BETTER[args.metric])
        _emit(ftext, args.front)


def cmd_h264(args, cfg):
    src = Path(args.video)
    ref = None
    with tempfile.TemporaryDirectory(prefix="mvface-") as tmp:
        if src.is_dir() or Path(str(src) + ".txt").exists():
            ref = frames_io.read_frames(src)
            video = Path(tmp) / "input.y4m"
            frames_io.write_y4m(video, ref, fps=cfg["fps"])
        else:
            video = src
        points = []
        for crf in args.crf:
            res = h264.h264_baseline(video, crf, fps=cfg["fps"], ffmpeg=args.ffmpeg)
            if ref is not None:
                value = getattr(metrics.evaluate_sequences(ref, res.frames, with_ms_ssim=(
                    args.metric == "ms_ssim")), args.metric)
            else:
                value = float("nan")
            points.append(rd.RDPoint(res.kbps, value, f"h264-crf{crf}",
                                     res.file_bits / len(res.frames), len(res.frames)))
    text, _ = rd.rd_curve(points, rd.HIGHER_IS_BETTER[args.metric])
    _emit(text, args.output)


def build_parser():
    p = argparse.ArgumentParser(prog="mvface", description="Multi-view face video codec tools.")
    p.add_argument("--config", help="key=value file: sigma, eps_bg, d, tau, swap_budget, fps")
    p.add_argument("--seed", type=int, default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("select-views", help="choose source views from a landmark file")
    s.add_argument("landmarks")
    s.add_argument("--strategy", choices=["random", "fps", "reservoir", "streaming-fps"],
                   default="fps")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--normalize", action="store_true", help="normalize landmarks (fps only)")
    s.add_argument("--swap-log", help="append streaming-fps decisions to this file")
    s.set_defaults(func=cmd_select_views)

    s = sub.add_parser("encode", help="frames + keypoints -> .mvfc")
    s.add_argument("--frames", required=True, help="raw .rgb file (with sidecar) or PNG dir")
    s.add_argument("--keypoints", required=True)
    s.add_argument("--views", required=True, help="comma-separated source frame indices")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("decode", help=".mvfc -> reconstructed frames")
    s.add_argument("stream")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--png", action="store_true", help="write a PNG directory instead of raw")
    s.add_argument("--aggregator", choices=["max", "mean", "sa"], default="max")
    s.add_argument("--weights", help="weight container for backbone and aggregator")
    s.add_argument("--view-keypoints", help="keypoints for source views not in the stream")
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("evaluate", help="compare two frame sequences")
    s.add_argument("reference")
    s.add_argument("test")
    s.add_argument("--color", choices=["rgb", "luma"], default="rgb")
    s.add_argument("--stream", help="mvfc stream whose rate is attached to the report")
    s.add_argument("--label")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("rd-curve", help="evaluation reports -> RD CSV")
    s.add_argument("reports", nargs="+")
    s.add_argument("--metric", choices=sorted(rd.HIGHER_IS_BETTER), default="psnr_db")
    s.add_argument("-o", "--output")
    s.add_argument("--front", help="also write the Pareto front CSV here")
    s.set_defaults(func=cmd_rd_curve)

    s = sub.add_parser("h264-baseline", help="CRF sweep with the external H264 encoder")
    s.add_argument("video", help="raw .rgb (with sidecar), PNG dir, or any ffmpeg-readable file")
    s.add_argument("--crf", type=int, nargs="+", default=[40, 35, 30, 25])
    s.add_argument("--metric", choices=sorted(rd.HIGHER_IS_BETTER), default="psnr_db")
    s.add_argument("--ffmpeg", default="ffmpeg")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_h264)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = read_config(args.config)
        args.func(args, cfg)
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"mvface {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
