import struct

import numpy as np
import pytest

from mrselect.data import LabeledDataset, synthetic_digits
from mrselect.errors import CountMismatch, MalformedFile
from mrselect.idx import (
    IMAGE_MAGIC,
    LABEL_MAGIC,
    load_idx,
    read_idx_images,
    read_idx_labels,
    write_idx,
)


def make_image_file(path, pixels):
    pixels = np.asarray(pixels, dtype=np.uint8)
    n, h, w = pixels.shape
    path.write_bytes(struct.pack(">IIII", IMAGE_MAGIC, n, h, w) + pixels.tobytes())


def make_label_file(path, labels):
    labels = np.asarray(labels, dtype=np.uint8)
    path.write_bytes(struct.pack(">II", LABEL_MAGIC, len(labels)) + labels.tobytes())


class TestRead:
    def test_hand_built_image_bytes(self, tmp_path):
        # two 2x3 images written out byte by byte
        raw = struct.pack(">IIII", 0x00000803, 2, 2, 3) + bytes(
            [0, 51, 102, 153, 204, 255, 10, 20, 30, 40, 50, 60]
        )
        p = tmp_path / "imgs"
        p.write_bytes(raw)
        imgs = read_idx_images(p)
        assert imgs.shape == (2, 2, 3)
        assert imgs.dtype == np.uint8
        assert imgs[0].tolist() == [[0, 51, 102], [153, 204, 255]]
        assert imgs[1, 1, 2] == 60

    def test_hand_built_label_bytes(self, tmp_path):
        p = tmp_path / "labels"
        p.write_bytes(struct.pack(">II", 0x00000801, 4) + bytes([3, 0, 2, 1]))
        assert read_idx_labels(p).tolist() == [3, 0, 2, 1]

    def test_bad_image_magic(self, tmp_path):
        p = tmp_path / "imgs"
        p.write_bytes(struct.pack(">IIII", 0x00000801, 1, 1, 1) + b"\x00")
        with pytest.raises(MalformedFile, match="magic"):
            read_idx_images(p)

    def test_bad_label_magic(self, tmp_path):
        p = tmp_path / "labels"
        p.write_bytes(struct.pack(">II", 0x00000803, 1) + b"\x00")
        with pytest.raises(MalformedFile, match="magic"):
            read_idx_labels(p)

    def test_truncated_header(self, tmp_path):
        p = tmp_path / "imgs"
        p.write_bytes(struct.pack(">II", IMAGE_MAGIC, 1))
        with pytest.raises(MalformedFile, match="truncated"):
            read_idx_images(p)

    def test_truncated_pixels(self, tmp_path):
        p = tmp_path / "imgs"
        p.write_bytes(struct.pack(">IIII", IMAGE_MAGIC, 2, 2, 2) + bytes(7))
        with pytest.raises(MalformedFile, match="truncated"):
            read_idx_images(p)

    def test_trailing_bytes_rejected(self, tmp_path):
        p = tmp_path / "labels"
        p.write_bytes(struct.pack(">II", LABEL_MAGIC, 2) + bytes([1, 2, 3]))
        with pytest.raises(MalformedFile, match="trailing"):
            read_idx_labels(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MalformedFile, match="cannot open"):
            read_idx_images(tmp_path / "absent")


class TestLoad:
    def test_pixel_scaling(self, tmp_path):
        make_image_file(tmp_path / "i", [[[0, 255], [51, 102]]])
        make_label_file(tmp_path / "l", [1])
        ds = load_idx(tmp_path / "i", tmp_path / "l")
        assert ds.images.shape == (1, 2, 2, 1)
        assert ds.images[0, 0, 0, 0] == 0.0
        assert ds.images[0, 0, 1, 0] == 1.0
        assert ds.images[0, 1, 0, 0] == pytest.approx(51 / 255)

    def test_count_mismatch(self, tmp_path):
        make_image_file(tmp_path / "i", np.zeros((3, 2, 2)))
        make_label_file(tmp_path / "l", [0, 1])
        with pytest.raises(CountMismatch):
            load_idx(tmp_path / "i", tmp_path / "l")

    def test_num_classes_inferred_and_overridable(self, tmp_path):
        make_image_file(tmp_path / "i", np.zeros((3, 2, 2)))
        make_label_file(tmp_path / "l", [0, 4, 2])
        assert load_idx(tmp_path / "i", tmp_path / "l").num_classes == 5
        assert load_idx(tmp_path / "i", tmp_path / "l", num_classes=10).num_classes == 10


class TestWrite:
    def test_round_trip_preserves_quantized_pixels(self, tmp_path):
        ds = synthetic_digits(40, seed=3)
        write_idx(ds, tmp_path / "i", tmp_path / "l")
        back = load_idx(tmp_path / "i", tmp_path / "l", num_classes=ds.num_classes)
        assert back.labels.tolist() == ds.labels.tolist()
        # quantization error bounded by half a uint8 step
        assert np.max(np.abs(back.images - ds.images)) <= 0.5 / 255 + 1e-12

    def test_written_bytes_match_expected_layout(self, tmp_path):
        images = np.array([[[0.0], [1.0]], [[0.2], [0.8]]])[None]  # (1, 2, 2, 1)
        ds = LabeledDataset(images, np.array([7]), 8)
        write_idx(ds, tmp_path / "i", tmp_path / "l")
        raw = (tmp_path / "i").read_bytes()
        assert raw[:16] == struct.pack(">IIII", IMAGE_MAGIC, 1, 2, 2)
        assert list(raw[16:]) == [0, 255, 51, 204]
        assert (tmp_path / "l").read_bytes() == struct.pack(">II", LABEL_MAGIC, 1) + bytes([7])

    def test_multichannel_rejected(self, tmp_path):
        ds = LabeledDataset(np.zeros((2, 4, 4, 3)), np.zeros(2, dtype=np.int64), 2)
        with pytest.raises(MalformedFile):
            write_idx(ds, tmp_path / "i", tmp_path / "l")
