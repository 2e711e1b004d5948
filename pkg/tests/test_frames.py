import numpy as np
import pytest

from preprocessing.frames import FrameSequence, to_gray_ubyte, write_frame


def test_frames_indexed_by_trailing_number_in_natural_order(tmp_path):
    for name in ["frame_10.png", "frame_2.png", "frame_1.tif", "notes.txt"]:
        if name.endswith(".txt"):
            (tmp_path / name).write_text("skip me")
        else:
            write_frame(tmp_path / name, np.zeros((4, 4), dtype=np.uint8))
    frames = FrameSequence(tmp_path)
    assert frames.frame_numbers() == [1, 2, 10]
    assert frames.path_for(10).name == "frame_10.png"


def test_duplicate_frame_numbers_rejected(tmp_path):
    write_frame(tmp_path / "a_5.png", np.zeros((4, 4), dtype=np.uint8))
    write_frame(tmp_path / "b_5.png", np.zeros((4, 4), dtype=np.uint8))
    with pytest.raises(ValueError):
        FrameSequence(tmp_path)


def test_missing_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        FrameSequence(tmp_path / "absent")


def test_read_frame_returns_2d_uint8(tmp_path):
    rgb = np.zeros((6, 5, 3), dtype=np.uint8)
    rgb[..., :] = 200
    write_frame(tmp_path / "f_0.png", rgb)
    frame = FrameSequence(tmp_path).read_frame(0)
    assert frame.shape == (6, 5) and frame.dtype == np.uint8
    assert abs(int(frame[0, 0]) - 200) <= 1


def test_to_gray_ubyte_scales_floats():
    image = np.array([[0.0, 1.0]])
    assert to_gray_ubyte(image).tolist() == [[0, 255]]


def test_frame_size_is_width_then_height(tmp_path):
    assert FrameSequence(tmp_path).frame_size() is None
    write_frame(tmp_path / "frame_0.png", np.zeros((30, 50), dtype=np.uint8))
    assert FrameSequence(tmp_path).frame_size() == (50, 30)
