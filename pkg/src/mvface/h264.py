"""H264 reference codec via an external ffmpeg binary.

The encode command is fixed::

    ffmpeg -i $INPUT_FILE -preset medium -codec:v libx264 -x264-params bframes=0
           -pix_fmt yuv420p -an -crf $CRF $OUTPUT_FILE

``-an`` drops audio; the flag is sometimes misspelled ``-na``, which ffmpeg
rejects.
"""
from __future__ import annotations

import os
import re
import shlex
import shutil
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from string import Template

import numpy as np

COMMAND_TEMPLATE = (
    "ffmpeg -i ${INPUT_FILE} -preset medium -codec:v libx264 -x264-params bframes=0 "
    "-pix_fmt yuv420p -an -crf ${CRF} ${OUTPUT_FILE}"
)


class H264Error(RuntimeError):
    """The external encoder is missing or failed; ``output`` holds its log."""

    def __init__(self, message, output=""):
        super().__init__(message if not output else f"{message}\n{output.strip()[-2000:]}")
        self.output = output


def encode_command(input_file, crf, output_file, ffmpeg="ffmpeg"):
    """Argument vector of the H264 encode for one CRF value."""
    crf = int(crf)
    if not 0 <= crf <= 51:
        raise ValueError(f"CRF must be within [0, 51], got {crf}")
    return [ffmpeg, "-i", os.fspath(input_file), "-preset", "medium", "-codec:v", "libx264",
            "-x264-params", "bframes=0", "-pix_fmt", "yuv420p", "-an", "-crf", str(crf),
            os.fspath(output_file)]


def format_command(input_file, crf, output_file):
    """The command as a shell string, from the template."""
    return Template(COMMAND_TEMPLATE).substitute(
        INPUT_FILE=shlex.quote(os.fspath(input_file)), CRF=int(crf),
        OUTPUT_FILE=shlex.quote(os.fspath(output_file)))


def find_ffmpeg(ffmpeg="ffmpeg"):
    return shutil.which(ffmpeg)


def _run(argv):
    try:
        proc = subprocess.run(argv, capture_output=True)
    except FileNotFoundError as exc:
        raise H264Error(f"external encoder not found: {argv[0]}") from exc
    if proc.returncode != 0:
        raise H264Error(f"{Path(argv[0]).name} exited with status {proc.returncode}",
                        proc.stderr.decode(errors="replace"))
    return proc


@dataclass
class H264Result:
    crf: int
    frames: np.ndarray      # M x 3 x H x W uint8
    file_bits: int
    kbps: float


def _probe_size(ffmpeg, path):
    proc = subprocess.run([ffmpeg, "-hide_banner", "-i", os.fspath(path)], capture_output=True)
    m = re.search(r"Video:.*?(\d{2,5})x(\d{2,5})", proc.stderr.decode(errors="replace"))
    if not m:
        raise H264Error("could not determine the encoded frame size",
                        proc.stderr.decode(errors="replace"))
    return int(m.group(1)), int(m.group(2))


def h264_baseline(input_file, crf, fps=25.0, ffmpeg="ffmpeg", keep=None):
    """Encode ``input_file`` at ``crf``, decode it back and measure the bitrate.

    The bitrate is the encoded file size over the clip duration
    (decoded frames / ``fps``).  Intermediate files live in a temporary
    directory that is removed on success and on failure; pass ``keep`` to
    copy the encoded file there.
    """
    exe = find_ffmpeg(ffmpeg)
    if exe is None:
        raise H264Error(f"external encoder not found: {ffmpeg}")
    with tempfile.TemporaryDirectory(prefix="mvface-h264-") as tmp:
        out = Path(tmp) / "encoded.mp4"
        _run(encode_command(input_file, crf, out, ffmpeg=exe))
        W, H = _probe_size(exe, out)
        proc = _run([exe, "-hide_banner", "-loglevel", "error", "-i", os.fspath(out),
                     "-f", "rawvideo", "-pix_fmt", "rgb24", "-"])
        raw = np.frombuffer(proc.stdout, dtype=np.uint8)
        if raw.size == 0 or raw.size % (H * W * 3):
            raise H264Error("decoded stream size does not match the frame size")
        frames = raw.reshape(-1, H, W, 3).transpose(0, 3, 1, 2)
        bits = 8 * out.stat().st_size
        if keep is not None:
            shutil.copy(out, keep)
    duration = len(frames) / fps
    return H264Result(int(crf), frames, bits, bits / duration / 1000.0)


def crf_sweep(input_file, crfs, fps=25.0, ffmpeg="ffmpeg"):
    """Encode at each CRF in turn (serially)."""
    return [h264_baseline(input_file, c, fps=fps, ffmpeg=ffmpeg) for c in crfs]
