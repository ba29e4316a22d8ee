"""Dataset files: IDX image/label IO, numeric CSV, and a bundled corpus.

The IDX format is the big-endian binary layout used by the classic
handwritten-digit corpus: a magic number (0x00000803 for uint8 image
stacks, 0x00000801 for uint8 label vectors), big-endian uint32 dimension
sizes, then raw bytes. Readers report malformed headers with the byte
offset of the bad field.

Because the full 28x28 corpus is too large to vendor, the package ships
the UCI optical-digits subset (1797 8x8 images, public domain) and
upscales it to 28x28 so the training pipeline sees the canonical
784-feature geometry end to end.
"""

from __future__ import annotations

import gzip
import struct
import warnings
from importlib.resources import files

import numpy as np

from .errors import MalformedInput

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

# Row/column duplication counts taking an 8-pixel axis to 28 pixels.
UPSCALE_REPEATS = (4, 3, 4, 3, 4, 3, 4, 3)


def read_idx(path) -> np.ndarray:
    """Read an IDX file into a uint8 array (n,rows,cols) or (n,)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise MalformedInput(f"{path}: truncated IDX header at offset 0")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic == IMAGE_MAGIC:
        ndim = 3
    elif magic == LABEL_MAGIC:
        ndim = 1
    else:
        raise MalformedInput(
            f"{path}: bad IDX magic 0x{magic:08x} at offset 0 "
            f"(expected 0x{IMAGE_MAGIC:08x} images or 0x{LABEL_MAGIC:08x} labels)"
        )
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise MalformedInput(f"{path}: truncated IDX header at offset {len(raw)}")
    dims = struct.unpack(f">{ndim}I", raw[4:header_end])
    count = int(np.prod(dims))
    if len(raw) != header_end + count:
        raise MalformedInput(
            f"{path}: expected {header_end + count} bytes for shape {dims}, "
            f"got {len(raw)}"
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=header_end).reshape(dims)


def write_idx(path, array: np.ndarray) -> None:
    """Write a uint8 array as IDX: 3-D image stacks or 1-D label vectors."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    if array.ndim == 3:
        magic = IMAGE_MAGIC
    elif array.ndim == 1:
        magic = LABEL_MAGIC
    else:
        raise MalformedInput(f"IDX arrays must be 1-D or 3-D, got shape {array.shape}")
    with open(path, "wb") as fh:
        fh.write(struct.pack(f">{1 + array.ndim}I", magic, *array.shape))
        fh.write(array.tobytes())


def read_numeric_csv(path) -> np.ndarray:
    """Read a headerless numeric CSV as a 2-D float array (one sample per row)."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # empty files warn before we raise
            data = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise MalformedInput(f"{path}: not numeric CSV ({exc})") from None
    if data.size == 0:
        raise MalformedInput(f"{path}: empty CSV")
    return data


def bundled_digits() -> tuple[np.ndarray, np.ndarray]:
    """The vendored 8x8 digit corpus: (1797, 8, 8) uint8 images in 0..16, labels."""
    resource = files("fenn").joinpath("data/digits.csv.gz")
    with resource.open("rb") as fh, gzip.open(fh, mode="rt") as text:
        table = np.loadtxt(text, delimiter=",", dtype=np.int64)
    images = table[:, :64].reshape(-1, 8, 8).astype(np.uint8)
    labels = table[:, 64].astype(np.uint8)
    return images, labels


def upscale_images(images: np.ndarray) -> np.ndarray:
    """Nearest-neighbour upscale of (n, 8, 8) images in 0..16 to (n, 28, 28) in 0..255."""
    if images.ndim != 3 or images.shape[1:] != (8, 8):
        raise MalformedInput(f"expected (n, 8, 8) images, got {images.shape}")
    big = np.repeat(np.repeat(images, UPSCALE_REPEATS, axis=1), UPSCALE_REPEATS, axis=2)
    return np.rint(big.astype(np.float64) / 16.0 * 255.0).astype(np.uint8)


def canonical_split(
    train_count: int = 500, test_count: int = 200, seed: int = 0
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic (train images, train labels, test images, test labels).

    Images are 28x28 uint8. The split is a seeded permutation of the
    bundled corpus with the first train_count samples for training and
    the next test_count for testing.
    """
    images, labels = bundled_digits()
    if train_count + test_count > len(labels):
        raise MalformedInput(
            f"corpus has {len(labels)} samples, cannot split "
            f"{train_count}+{test_count}"
        )
    order = np.random.default_rng(seed).permutation(len(labels))
    big = upscale_images(images[order])
    labels = labels[order]
    return (
        big[:train_count],
        labels[:train_count].astype(np.int64),
        big[train_count : train_count + test_count],
        labels[train_count : train_count + test_count].astype(np.int64),
    )


def features_from_images(images: np.ndarray) -> np.ndarray:
    """Flatten (n, rows, cols) uint8 images to a (rows*cols, n) float matrix in [0, 1]."""
    if images.ndim != 3:
        raise MalformedInput(f"expected (n, rows, cols) images, got {images.shape}")
    return images.reshape(images.shape[0], -1).T.astype(np.float64) / 255.0
