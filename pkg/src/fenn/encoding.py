"""Fixed-point codec between real-valued tensors and the integer FE plaintexts.

Reals are scaled by 10^scale_digits (two decimal places by default) and
rounded half away from zero. A QuantTensor remembers how many scale factors
it carries: a dot product of two scale_power=1 tensors yields scale_power=2,
element-wise add/sub preserve the power, mul adds them.

The codec also owns the discrete-log bound bookkeeping. dot_bound() is the
worst case over all in-range operands; the *_bound helpers give the tighter
per-operand windows used on the hot decryption path, where the plaintext
side of the computation is known to the decryptor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OutOfRange


@dataclass(frozen=True)
class FixedPointCodec:
    """scale_digits decimal places; value_bound caps any quantized element."""

    scale_digits: int = 2
    value_bound: int = 25500

    def __post_init__(self):
        if self.scale_digits < 0:
            raise ValueError("scale_digits must be non-negative")
        if self.value_bound < 1:
            raise ValueError("value_bound must be at least 1")

    @property
    def scale_factor(self) -> int:
        return 10**self.scale_digits


@dataclass(frozen=True)
class QuantTensor:
    """Signed integer tensor whose true value is data / scale_factor^scale_power."""

    data: np.ndarray
    scale_power: int

    def __post_init__(self):
        if self.scale_power < 0:
            raise ValueError("scale_power must be non-negative")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape


def quantize(values, codec: FixedPointCodec) -> QuantTensor:
    """Round values * scale_factor half away from zero; result has scale_power 1."""
    arr = np.asarray(values, dtype=np.float64)
    q = np.copysign(np.floor(np.abs(arr) * codec.scale_factor + 0.5), arr)
    if np.any(np.abs(q) > codec.value_bound):
        worst = float(np.max(np.abs(arr)))
        raise OutOfRange(
            f"|value| up to {worst} exceeds codec range "
            f"{codec.value_bound / codec.scale_factor}"
        )
    return QuantTensor(q.astype(np.int64), scale_power=1)


def dequantize(qt: QuantTensor, codec: FixedPointCodec) -> np.ndarray:
    """Back to float64: data / scale_factor^scale_power."""
    return qt.data.astype(np.float64) / float(codec.scale_factor**qt.scale_power)


def dot_bound(eta: int, codec: FixedPointCodec) -> int:
    """Worst-case |<x, y>| over eta-long vectors of in-range quantized values."""
    return eta * codec.value_bound**2


def operand_dot_bound(y, codec: FixedPointCodec) -> int:
    """|<x, y>| <= ||y||_1 * value_bound for any in-range x: the per-key window."""
    l1 = int(np.sum(np.abs(np.asarray(y, dtype=np.int64))))
    return max(l1, 1) * codec.value_bound


def elementwise_bound(op: str, y: int, codec: FixedPointCodec) -> int:
    """Result window for x op y with |x| <= value_bound and known plaintext y."""
    y = abs(int(y))
    vb = codec.value_bound
    if op in ("add", "sub"):
        return vb + y
    if op == "mul":
        return vb * max(y, 1)
    if op == "div":
        # An exact quotient can't exceed |x| for |y| >= 1.
        return vb
    raise ValueError(f"unknown operation {op!r}")
