"""Secure convolution for the first layer of a CNN.

The client zero-pads the image, slides the filter geometry over it, and
encrypts every window as one inner-product ciphertext (padding zeros are
encrypted inside the window vector). The server obtains a single key for a
flattened filter and decrypts one weighted sum per window, which fills the
output feature map position by position. Windows are encrypted once and
reused across all filters; only keys multiply with the filter count.

Windows and kernels are flattened row-major, channel-minor: flat index
((dy * f) + dx) * C + c. Key and window must agree on this order, so it is
part of the wire contract.

Overlapping windows are encrypted independently, so the ciphertext list is
a factor windows * f * f * C / (H * W * C) larger than the image. That
expansion is inherent to per-window encryption.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import feip
from .encoding import FixedPointCodec, QuantTensor, operand_dot_bound
from .errors import ShapeMismatch
from .group import ensure_dlog_table
from .messages import CONV_KERNEL, KeyRequest
from .parallel import parallel_map


@dataclass(frozen=True)
class ConvSpec:
    """Input geometry (H x W x C) plus filter size, padding, stride, filter count."""

    height: int
    width: int
    channels: int
    filter_size: int
    padding: int = 0
    stride: int = 1
    filter_count: int = 1

    def __post_init__(self):
        for dim, name in ((self.height, "height"), (self.width, "width")):
            span = dim + 2 * self.padding - self.filter_size
            if span < 0 or span % self.stride != 0:
                raise ShapeMismatch(
                    f"{name} {dim} with padding {self.padding}, filter "
                    f"{self.filter_size}, stride {self.stride} leaves no whole windows"
                )

    @property
    def out_height(self) -> int:
        return (self.height + 2 * self.padding - self.filter_size) // self.stride + 1

    @property
    def out_width(self) -> int:
        return (self.width + 2 * self.padding - self.filter_size) // self.stride + 1

    @property
    def window_length(self) -> int:
        return self.filter_size * self.filter_size * self.channels


@dataclass(frozen=True)
class EncryptedWindowList:
    """Per-window ciphertexts in row-major output order for one image."""

    spec: ConvSpec
    windows: tuple[feip.FeipCiphertext, ...]
    scale_power: int = 1

    def __post_init__(self):
        expected = self.spec.out_height * self.spec.out_width
        if len(self.windows) != expected:
            raise ShapeMismatch(f"expected {expected} windows, got {len(self.windows)}")

    @property
    def expansion_factor(self) -> float:
        spec = self.spec
        plain = spec.height * spec.width * spec.channels
        return len(self.windows) * spec.window_length / plain


def extract_windows(image: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """(out_h * out_w, f*f*C) plaintext window matrix, padded and flattened."""
    if image.shape != (spec.height, spec.width, spec.channels):
        raise ShapeMismatch(
            f"image shape {image.shape} != spec "
            f"{(spec.height, spec.width, spec.channels)}"
        )
    pd, f, st = spec.padding, spec.filter_size, spec.stride
    padded = np.pad(image, ((pd, pd), (pd, pd), (0, 0)))
    rows = []
    for oy in range(spec.out_height):
        for ox in range(spec.out_width):
            win = padded[oy * st : oy * st + f, ox * st : ox * st + f, :]
            rows.append(win.reshape(-1))
    return np.stack(rows)


def pre_process_encryption(
    x: QuantTensor, spec: ConvSpec, feip_mpk: feip.FeipMpk, rng=None
) -> EncryptedWindowList:
    """Encrypt every stride-placed window of one quantized image."""
    wins = extract_windows(x.data, spec)
    mpk = feip_mpk.prefix(spec.window_length) if feip_mpk.eta != spec.window_length else feip_mpk
    cts = tuple(feip.encrypt(mpk, row.tolist(), rng) for row in wins)
    return EncryptedWindowList(spec, cts, scale_power=x.scale_power)


def flatten_kernel(k: np.ndarray, spec: ConvSpec) -> list[int]:
    if k.shape != (spec.filter_size, spec.filter_size, spec.channels):
        raise ShapeMismatch(
            f"kernel shape {k.shape} != "
            f"{(spec.filter_size, spec.filter_size, spec.channels)}"
        )
    return [int(v) for v in k.reshape(-1)]


def pre_process_key_derive(
    k: QuantTensor, spec: ConvSpec, authority
) -> feip.FeipFunctionKey:
    """One inner-product key for a flattened filter, reusable across all windows."""
    flat = flatten_kernel(k.data, spec)
    resp = authority.derive(KeyRequest(function=CONV_KERNEL, operand=(tuple(flat),)))
    return resp.feip_keys[0]


def secure_convolution(
    t: EncryptedWindowList,
    fk: feip.FeipFunctionKey,
    k: QuantTensor,
    feip_mpk: feip.FeipMpk,
    codec: FixedPointCodec,
    workers: int = 1,
) -> QuantTensor:
    """Exact out_h x out_w map of window-filter weighted sums."""
    spec = t.spec
    flat = flatten_kernel(k.data, spec)
    mpk = feip_mpk.prefix(spec.window_length) if feip_mpk.eta != spec.window_length else feip_mpk
    bound = operand_dot_bound(flat, codec)
    ensure_dlog_table(mpk.params, bound)

    def cell(i: int) -> int:
        return feip.decrypt(mpk, t.windows[i], fk, flat, bound)

    vals = parallel_map(cell, len(t.windows), workers)
    data = np.array(vals, dtype=np.int64).reshape(spec.out_height, spec.out_width)
    return QuantTensor(data, t.scale_power + k.scale_power)
