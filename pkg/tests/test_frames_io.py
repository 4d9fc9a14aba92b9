import numpy as np
import pytest

from mvface import frames_io as fio
from mvface.motion_field import KeypointSet
from mvface.weights import save_weights
from conftest import random_keypoints


def test_keypoint_text_round_trip(tmp_path, rng):
    frames = [(i * 3, random_keypoints(rng)) for i in range(4)]
    fio.write_keypoints(tmp_path / "k.txt", frames)
    back = fio.read_keypoints(tmp_path / "k.txt")
    assert [i for i, _ in back] == [0, 3, 6, 9]
    assert all(a == b for (_, a), (_, b) in zip(frames, back))


def test_keypoints_clamped_on_ingest(tmp_path):
    (tmp_path / "k.txt").write_text("0, " + ", ".join(["1.5"] * 20) + "\n")
    (_, kp), = fio.read_keypoints(tmp_path / "k.txt")
    assert np.all(kp.points == 1.0)


def test_keypoint_format_errors(tmp_path):
    (tmp_path / "a.txt").write_text("0, 1, 2\n")
    with pytest.raises(fio.FormatError, match="line 1"):
        fio.read_keypoints(tmp_path / "a.txt")
    (tmp_path / "b.txt").write_text("0.5, " + ", ".join(["0"] * 20) + "\n")
    with pytest.raises(fio.FormatError):
        fio.read_keypoints(tmp_path / "b.txt")


def test_keypoints_from_container(tmp_path, rng):
    pts = rng.uniform(-1, 1, (3, 10, 2)).astype(np.float32)
    save_weights(tmp_path / "k.mvfw", {"keypoints": pts})
    back = fio.read_keypoints(tmp_path / "k.mvfw")
    assert [i for i, _ in back] == [0, 1, 2]
    assert back[1][1] == KeypointSet(pts[1])


def test_landmarks_round_trip(tmp_path, rng):
    X = rng.normal(size=(5, 6))
    fio.write_landmarks(tmp_path / "l.txt", X, [10, 11, 12, 13, 14])
    idx, Y = fio.read_landmarks(tmp_path / "l.txt")
    assert idx == [10, 11, 12, 13, 14]
    np.testing.assert_array_equal(X, Y)
    (tmp_path / "bad.txt").write_text("0, 1, 2\n")
    with pytest.raises(fio.FormatError, match="header"):
        fio.read_landmarks(tmp_path / "bad.txt")


def test_raw_frames_round_trip(tmp_path, rng):
    frames = rng.integers(0, 256, (3, 3, 4, 5)).astype(np.uint8)
    fio.write_raw_frames(tmp_path / "v.rgb", frames)
    assert (tmp_path / "v.rgb.txt").read_text() == "width=5\nheight=4\nframes=3\n"
    np.testing.assert_array_equal(fio.read_frames(tmp_path / "v.rgb"), frames)
    (tmp_path / "v.rgb.txt").write_text("width=5\nheight=4\nframes=4\n")
    with pytest.raises(fio.FormatError):
        fio.read_raw_frames(tmp_path / "v.rgb")


def test_png_round_trip(tmp_path, rng):
    frames = rng.integers(0, 256, (2, 3, 6, 4)).astype(np.uint8)
    fio.write_png_dir(tmp_path / "d", frames)
    np.testing.assert_array_equal(fio.read_frames(tmp_path / "d"), frames)
    np.testing.assert_array_equal(fio.png_decode(fio.png_bytes(frames[0])), frames[0])


def test_float_conversions():
    x = np.array([0.0, 0.5, 1.0, 1.2, -0.1])
    np.testing.assert_array_equal(fio.to_uint8(x), [0, 128, 255, 255, 0])
    assert fio.to_float(np.array([255], np.uint8))[0] == 1.0


def test_y4m_header(tmp_path):
    fio.write_y4m(tmp_path / "c.y4m", np.zeros((2, 3, 4, 6), np.uint8), fps=30)
    data = (tmp_path / "c.y4m").read_bytes()
    assert data.startswith(b"YUV4MPEG2 W6 H4 F30:1")
    assert data.count(b"FRAME\n") == 2
