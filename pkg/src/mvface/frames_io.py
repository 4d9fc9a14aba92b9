"""Text and raw-image formats used by the command line and the demos.

* keypoints: one line per frame, ``frame_index, x0, y0, ..., x9, y9``
* landmarks: header ``landmarks=L`` then ``frame_index, x0, y0, ...`` lines
* raw frames: planar 8-bit RGB frames back to back (``.rgb``) with a sidecar
  ``<file>.txt`` holding ``width=``, ``height=`` and ``frames=`` lines
"""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .motion_field import N_KEYPOINTS, KeypointSet
from .weights import MAGIC as WEIGHTS_MAGIC, unpack_weights


class FormatError(ValueError):
    pass


def _records(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line


def _parse_row(lineno, line, width):
    try:
        vals = [float(v) for v in line.replace(",", " ").split()]
    except ValueError as exc:
        raise FormatError(f"line {lineno}: {exc}") from None
    if len(vals) != 1 + width:
        raise FormatError(f"line {lineno}: expected {1 + width} fields, got {len(vals)}")
    if vals[0] != int(vals[0]) or vals[0] < 0:
        raise FormatError(f"line {lineno}: frame index must be a non-negative integer")
    return int(vals[0]), vals[1:]


def read_keypoints(path, n_keypoints=N_KEYPOINTS):
    """Read ``[(frame_index, KeypointSet), ...]`` from text or a weight container.

    Coordinates are clamped into ``[-1, 1]`` on ingest.  The binary form
    stores ``keypoints`` (M x N x 2) and optionally ``frame_index`` (M).
    """
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == WEIGHTS_MAGIC:
        arrays = unpack_weights(Path(path).read_bytes())
        if "keypoints" not in arrays:
            raise FormatError("keypoint container lacks a 'keypoints' entry")
        kps = arrays["keypoints"].reshape(-1, n_keypoints, 2)
        idx = arrays.get("frame_index", np.arange(len(kps)))
        return [(int(i), KeypointSet.ingest(k, n_keypoints)) for i, k in zip(idx, kps)]
    out = []
    for lineno, line in _records(path):
        idx, vals = _parse_row(lineno, line, 2 * n_keypoints)
        try:
            out.append((idx, KeypointSet.ingest(vals, n_keypoints)))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    return out


def write_keypoints(path, frames):
    with open(path, "w", encoding="utf-8") as fh:
        for idx, kp in frames:
            pts = kp.points if isinstance(kp, KeypointSet) else np.asarray(kp)
            fh.write(", ".join([str(int(idx))] + [repr(float(v)) for v in pts.reshape(-1)]) + "\n")


def read_landmarks(path):
    """Returns ``(frame_indices, features[M, 2L])``."""
    rows = _records(path)
    try:
        lineno, header = next(rows)
    except StopIteration:
        raise FormatError("empty landmark file") from None
    key, _, value = header.partition("=")
    if key.strip().lower() != "landmarks" or not value.strip().isdigit():
        raise FormatError(f"line {lineno}: expected a 'landmarks=L' header")
    L = int(value)
    idx, feats = [], []
    for lineno, line in rows:
        i, vals = _parse_row(lineno, line, 2 * L)
        idx.append(i)
        feats.append(vals)
    if not feats:
        raise FormatError("landmark file has no frames")
    X = np.asarray(feats, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise FormatError("landmark file contains non-finite values")
    return idx, X


def write_landmarks(path, features, frame_indices=None):
    features = np.asarray(features, dtype=np.float64)
    if frame_indices is None:
        frame_indices = range(len(features))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"landmarks={features.shape[1] // 2}\n")
        for i, row in zip(frame_indices, features):
            fh.write(", ".join([str(int(i))] + [repr(float(v)) for v in row]) + "\n")


# -- raw frames --------------------------------------------------------------

def to_uint8(image):
    """``[0, 1]`` float image to 8-bit with rounding."""
    return np.clip(np.round(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def to_float(image):
    return np.asarray(image, dtype=np.float32) / np.float32(255.0)


def _sidecar(path):
    return Path(os.fspath(path) + ".txt")


def write_raw_frames(path, frames):
    """Write ``3 x H x W`` uint8 frames as planar RGB plus the sidecar descriptor."""
    frames = [np.asarray(f, dtype=np.uint8) for f in frames]
    if not frames:
        raise FormatError("no frames to write")
    _, H, W = frames[0].shape
    with open(path, "wb") as fh:
        for f in frames:
            if f.shape != (3, H, W):
                raise FormatError("all frames must be 3 x H x W with one size")
            fh.write(f.tobytes())
    _sidecar(path).write_text(f"width={W}\nheight={H}\nframes={len(frames)}\n", encoding="utf-8")


def read_raw_frames(path):
    """Returns an ``M x 3 x H x W`` uint8 array."""
    meta = {}
    for _, line in _records(_sidecar(path)):
        k, _, v = line.partition("=")
        meta[k.strip()] = int(v)
    try:
        W, H, M = meta["width"], meta["height"], meta["frames"]
    except KeyError as exc:
        raise FormatError(f"sidecar descriptor lacks {exc}") from None
    data = np.fromfile(path, dtype=np.uint8)
    if data.size != M * 3 * H * W:
        raise FormatError(f"raw file holds {data.size} bytes, descriptor implies {M * 3 * H * W}")
    return data.reshape(M, 3, H, W)


def read_png_dir(path):
    from PIL import Image

    files = sorted(p for p in Path(path).iterdir() if p.suffix.lower() == ".png")
    if not files:
        raise FormatError(f"no PNG frames in {path}")
    return np.stack([np.asarray(Image.open(f).convert("RGB")).transpose(2, 0, 1) for f in files])


def write_png_dir(path, frames):
    from PIL import Image

    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(frames):
        Image.fromarray(np.asarray(f, dtype=np.uint8).transpose(1, 2, 0)).save(path / f"{i:06d}.png")


def read_frames(path):
    """Frames from a PNG directory or a raw ``.rgb`` file with sidecar."""
    return read_png_dir(path) if Path(path).is_dir() else read_raw_frames(path)


def png_bytes(frame):
    """Losslessly code one ``3 x H x W`` uint8 frame as PNG."""
    import io

    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(np.asarray(frame, dtype=np.uint8).transpose(1, 2, 0)).save(buf, format="PNG")
    return buf.getvalue()


def png_decode(data):
    import io

    from PIL import Image

    return np.asarray(Image.open(io.BytesIO(data)).convert("RGB")).transpose(2, 0, 1)


def write_y4m(path, frames, fps=25):
    """Write uint8 RGB frames as a 4:4:4 YUV4MPEG2 file (BT.601 full range)."""
    frames = np.asarray(frames, dtype=np.float64)
    _, _, H, W = frames.shape
    with open(path, "wb") as fh:
        fh.write(f"YUV4MPEG2 W{W} H{H} F{int(fps)}:1 Ip A1:1 C444 XCOLORRANGE=FULL\n".encode())
        for f in frames:
            r, g, b = f
            y = 0.299 * r + 0.587 * g + 0.114 * b
            u = 128 + (b - y) * 0.564
            v = 128 + (r - y) * 0.713
            fh.write(b"FRAME\n")
            for plane in (y, u, v):
                fh.write(np.clip(np.round(plane), 0, 255).astype(np.uint8).tobytes())
