"""Session bitstream: source views once, then one keypoint payload per frame.

Wire format (little-endian throughout)::

    session  := header frame*
    header   := b"MVFC" version:u16 K:u8 view{K}
    view     := frame_index:u32 view_bits:u32 payload[ceil(view_bits / 8)]
    frame    := frame_index:u32 coords:binary16[20]      (x0 y0 x1 y1 ... x9 y9)

The 320 coordinate bits are the per-frame rate; the frame index and the
header fields are container overhead and are reported separately.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .motion_field import N_KEYPOINTS, KeypointSet

MAGIC = b"MVFC"
VERSION = 1
COORDS_PER_FRAME = 2 * N_KEYPOINTS
COORD_BYTES = 2 * COORDS_PER_FRAME
COORD_BITS = 8 * COORD_BYTES
FRAME_BYTES = 4 + COORD_BYTES

_HALF = np.dtype("<f2")


class BitstreamError(ValueError):
    pass


class StreamDecodeError(BitstreamError):
    """A frame payload inside a session failed to decode."""

    def __init__(self, frame_number, reason):
        super().__init__(f"frame #{frame_number}: {reason}")
        self.frame_number = frame_number


# -- per-frame payload -------------------------------------------------------

def encode_keypoints(kp) -> bytes:
    """Pack 10 keypoints into 40 bytes of binary16 (round to nearest even)."""
    pts = kp.points if isinstance(kp, KeypointSet) else np.asarray(kp, dtype=np.float64)
    pts = np.asarray(pts, dtype=np.float64).reshape(-1)
    if pts.size != COORDS_PER_FRAME:
        raise BitstreamError(f"expected {COORDS_PER_FRAME} coordinates, got {pts.size}")
    if not np.all(np.isfinite(pts)):
        raise BitstreamError("cannot encode non-finite coordinate")
    if np.any(np.abs(pts) > 1.0):
        raise BitstreamError("coordinates must lie in [-1, 1]")
    return pts.astype(_HALF).tobytes()


def decode_keypoints(data) -> KeypointSet:
    data = bytes(data)
    if len(data) < COORD_BYTES:
        raise BitstreamError(f"truncated coordinate payload ({len(data)} of {COORD_BYTES} bytes)")
    vals = np.frombuffer(data[:COORD_BYTES], dtype=_HALF)
    if not np.all(np.isfinite(vals)):
        raise BitstreamError("payload holds a NaN or Inf coordinate")
    vals = vals.astype(np.float64)
    if np.any(np.abs(vals) > 1.0):
        raise BitstreamError("payload coordinate outside [-1, 1]")
    return KeypointSet(vals.reshape(N_KEYPOINTS, 2))


@dataclass(frozen=True)
class FramePayload:
    frame_index: int
    keypoints: KeypointSet


def encode_frame(kp, frame_index=0) -> bytes:
    """Frame index (u32) followed by the 40-byte coordinate block."""
    return struct.pack("<I", frame_index) + encode_keypoints(kp)


def decode_frame(data) -> FramePayload:
    data = bytes(data)
    if len(data) < FRAME_BYTES:
        raise BitstreamError(f"truncated frame payload ({len(data)} of {FRAME_BYTES} bytes)")
    (index,) = struct.unpack_from("<I", data)
    return FramePayload(index, decode_keypoints(data[4:FRAME_BYTES]))


# -- session header ----------------------------------------------------------

@dataclass(frozen=True)
class SourceViewRecord:
    """One source view: its frame index, declared bit cost and coded bytes."""

    frame_index: int
    view_bits: int
    payload: bytes

    def __post_init__(self):
        if len(self.payload) != -(-self.view_bits // 8):
            raise BitstreamError(
                f"view payload is {len(self.payload)} bytes, "
                f"{self.view_bits} bits need {-(-self.view_bits // 8)}")

    @classmethod
    def from_bytes(cls, frame_index, payload):
        return cls(frame_index, 8 * len(payload), bytes(payload))


@dataclass(frozen=True)
class SessionHeader:
    views: tuple
    version: int = VERSION

    def __post_init__(self):
        if not 1 <= len(self.views) <= 255:
            raise BitstreamError("a session carries between 1 and 255 source views")

    def pack(self) -> bytes:
        out = [MAGIC, struct.pack("<HB", self.version, len(self.views))]
        for v in self.views:
            out.append(struct.pack("<II", v.frame_index, v.view_bits))
            out.append(v.payload)
        return b"".join(out)

    @property
    def field_bits(self):
        """Container bits outside the view payloads."""
        return 8 * (4 + 2 + 1 + 8 * len(self.views))


def unpack_header(data, offset=0):
    """Parse a header; returns ``(SessionHeader, offset_after_header)``."""
    view = memoryview(data)
    if bytes(view[offset:offset + 4]) != MAGIC:
        raise BitstreamError("not an mvfc stream (bad magic)")
    pos = offset + 4
    if pos + 3 > len(view):
        raise BitstreamError("truncated session header")
    version, count = struct.unpack_from("<HB", view, pos)
    if version != VERSION:
        raise BitstreamError(f"unsupported stream version {version}")
    pos += 3
    views = []
    for _ in range(count):
        if pos + 8 > len(view):
            raise BitstreamError("truncated view record")
        idx, bits = struct.unpack_from("<II", view, pos)
        pos += 8
        n = -(-bits // 8)
        if pos + n > len(view):
            raise BitstreamError("truncated view payload")
        views.append(SourceViewRecord(idx, bits, bytes(view[pos:pos + n])))
        pos += n
    return SessionHeader(tuple(views), version), pos


# -- rate accounting ---------------------------------------------------------

@dataclass
class RateLedger:
    """Bit accounting for one session.

    ``stream_bits`` always equals eight times the byte length of what the
    writer emitted; ``swap_bits`` tracks view updates announced outside the
    base stream.
    """

    header_field_bits: int = 0
    source_view_bits: int = 0
    view_padding_bits: int = 0
    frames_sent: int = 0
    coordinate_bits: int = 0
    frame_overhead_bits: int = 0
    swaps: list = field(default_factory=list)

    payload_bits = COORD_BITS

    def record_header(self, header: SessionHeader):
        self.header_field_bits += header.field_bits
        for v in header.views:
            self.source_view_bits += v.view_bits
            self.view_padding_bits += 8 * len(v.payload) - v.view_bits

    def record_frame(self):
        self.frames_sent += 1
        self.coordinate_bits += COORD_BITS
        self.frame_overhead_bits += 32

    def record_swap(self, frame_index, view_bits):
        self.swaps.append((int(frame_index), int(view_bits)))

    @property
    def swap_bits(self):
        return sum(b for _, b in self.swaps)

    @property
    def overhead_bits(self):
        return self.header_field_bits + self.view_padding_bits + self.frame_overhead_bits

    @property
    def stream_bits(self):
        return self.source_view_bits + self.coordinate_bits + self.overhead_bits

    def as_dict(self):
        return {
            "source_view_bits": self.source_view_bits,
            "frames_sent": self.frames_sent,
            "coordinate_bits": self.coordinate_bits,
            "overhead_bits": self.overhead_bits,
            "swap_bits": self.swap_bits,
            "stream_bits": self.stream_bits,
        }


def amortized_rate(ledger: RateLedger, n_frames, fps=25.0, payload_bits=None):
    """Bits per frame and kbit/s once the one-time view cost is spread over ``n_frames``.

    Only keypoint coordinates count as per-frame payload unless
    ``payload_bits`` says otherwise.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be at least 1")
    if fps <= 0:
        raise ValueError("fps must be positive")
    payload = ledger.payload_bits if payload_bits is None else payload_bits
    bits_per_frame = (ledger.source_view_bits + ledger.swap_bits + n_frames * payload) / n_frames
    return bits_per_frame, bits_per_frame * fps / 1000.0


# -- sessions ----------------------------------------------------------------

class SessionWriter:
    """Streams a session to a binary file object while keeping the ledger."""

    def __init__(self, fh, views):
        self.fh = fh
        self.ledger = RateLedger()
        self.header = SessionHeader(tuple(views))
        self._last = None
        self.fh.write(self.header.pack())
        self.ledger.record_header(self.header)

    def write_frame(self, kp, frame_index):
        if self._last is not None and frame_index <= self._last:
            raise BitstreamError(f"frame {frame_index} written after frame {self._last}")
        self.fh.write(encode_frame(kp, frame_index))
        self._last = frame_index
        self.ledger.record_frame()


def encode_session(views, frames):
    """Encode ``frames`` (pairs of ``(frame_index, KeypointSet)``) into bytes."""
    buf = io.BytesIO()
    writer = SessionWriter(buf, views)
    for idx, kp in frames:
        writer.write_frame(kp, idx)
    return buf.getvalue(), writer.ledger


def iter_frames(data, offset):
    """Yield decoded frame payloads from ``data[offset:]``."""
    view = memoryview(data)
    number = 0
    last = None
    while offset < len(view):
        chunk = bytes(view[offset:offset + FRAME_BYTES])
        try:
            payload = decode_frame(chunk)
        except BitstreamError as exc:
            raise StreamDecodeError(number, str(exc)) from exc
        if last is not None and payload.frame_index <= last:
            raise StreamDecodeError(number, f"frame index {payload.frame_index} out of order")
        last = payload.frame_index
        yield payload
        offset += FRAME_BYTES
        number += 1


def decode_session(data):
    """Returns ``(SessionHeader, [FramePayload, ...], RateLedger)``."""
    header, pos = unpack_header(data)
    ledger = RateLedger()
    ledger.record_header(header)
    frames = []
    for payload in iter_frames(data, pos):
        frames.append(payload)
        ledger.record_frame()
    return header, frames, ledger
