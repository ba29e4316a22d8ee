"""IDX/CSV file handling and the bundled digit corpus."""

import numpy as np
import pytest

from fenn.datasets import (
    IMAGE_MAGIC,
    bundled_digits,
    canonical_split,
    features_from_images,
    read_idx,
    read_numeric_csv,
    upscale_images,
    write_idx,
)
from fenn.errors import MalformedInput


class TestIdx:
    def test_image_round_trip(self, tmp_path):
        images = np.arange(2 * 5 * 4, dtype=np.uint8).reshape(2, 5, 4)
        path = tmp_path / "img.idx"
        write_idx(path, images)
        assert np.array_equal(read_idx(path), images)

    def test_label_round_trip(self, tmp_path):
        labels = np.array([3, 1, 4, 1, 5], dtype=np.uint8)
        path = tmp_path / "lbl.idx"
        write_idx(path, labels)
        back = read_idx(path)
        assert back.ndim == 1 and np.array_equal(back, labels)

    def test_header_is_big_endian(self, tmp_path):
        path = tmp_path / "img.idx"
        write_idx(path, np.zeros((1, 2, 3), dtype=np.uint8))
        raw = path.read_bytes()
        assert raw[:4] == (0x00000803).to_bytes(4, "big")
        assert raw[4:16] == b"".join(n.to_bytes(4, "big") for n in (1, 2, 3))

    def test_bad_magic_names_offset(self, tmp_path):
        path = tmp_path / "bad.idx"
        path.write_bytes(b"\xde\xad\xbe\xef" + b"\x00" * 16)
        with pytest.raises(MalformedInput, match="offset 0"):
            read_idx(path)

    def test_truncated_data_detected(self, tmp_path):
        path = tmp_path / "cut.idx"
        write_idx(path, np.zeros((3, 4, 4), dtype=np.uint8))
        raw = path.read_bytes()
        path.write_bytes(raw[:-5])
        with pytest.raises(MalformedInput, match="bytes"):
            read_idx(path)

    def test_rejects_2d_arrays(self, tmp_path):
        with pytest.raises(MalformedInput, match="1-D or 3-D"):
            write_idx(tmp_path / "x.idx", np.zeros((2, 2), dtype=np.uint8))


class TestCsv:
    def test_reads_rows(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("1,2,3\n4,5,6\n")
        assert np.array_equal(read_numeric_csv(path), [[1, 2, 3], [4, 5, 6]])

    def test_single_row_is_2d(self, tmp_path):
        path = tmp_path / "one.csv"
        path.write_text("7,8\n")
        assert read_numeric_csv(path).shape == (1, 2)

    def test_non_numeric_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,banana\n")
        with pytest.raises(MalformedInput, match="numeric"):
            read_numeric_csv(path)

    def test_empty_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(MalformedInput, match="empty"):
            read_numeric_csv(path)


class TestCorpus:
    def test_bundled_shapes(self):
        images, labels = bundled_digits()
        assert images.shape == (1797, 8, 8) and labels.shape == (1797,)
        assert images.max() == 16 and set(np.unique(labels)) == set(range(10))

    def test_upscale_geometry(self):
        images, _ = bundled_digits()
        big = upscale_images(images[:3])
        assert big.shape == (3, 28, 28) and big.dtype == np.uint8
        # pixel (0, 0) spreads over a 4x4 block of equal values
        block = big[0, :4, :4]
        assert (block == block[0, 0]).all()
        assert big.max() <= 255 and round(images[0, 0, 0] / 16 * 255) == block[0, 0]

    def test_upscale_rejects_wrong_shape(self):
        with pytest.raises(MalformedInput):
            upscale_images(np.zeros((2, 7, 8), dtype=np.uint8))

    def test_canonical_split_deterministic(self):
        a = canonical_split(40, 20, seed=0)
        b = canonical_split(40, 20, seed=0)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)
        assert a[0].shape == (40, 28, 28) and a[2].shape == (20, 28, 28)
        assert a[1].shape == (40,) and a[3].shape == (20,)

    def test_canonical_split_size_guard(self):
        with pytest.raises(MalformedInput, match="1797"):
            canonical_split(1700, 200)

    def test_features_shape_and_range(self):
        images, _ = bundled_digits()
        feats = features_from_images(upscale_images(images[:5]))
        assert feats.shape == (784, 5)
        assert feats.min() >= 0.0 and feats.max() <= 1.0

    def test_idx_round_trip_of_split(self, tmp_path):
        train_x, train_y, _, _ = canonical_split(10, 5)
        write_idx(tmp_path / "x.idx", train_x)
        write_idx(tmp_path / "y.idx", train_y.astype(np.uint8))
        assert np.array_equal(read_idx(tmp_path / "x.idx"), train_x)
        assert np.array_equal(read_idx(tmp_path / "y.idx"), train_y)
