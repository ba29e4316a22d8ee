"""Wire-level message types exchanged between client, server, and authority.

These are plain immutable records; JSON encoding lives in serialize. The
function vocabulary is shared by the permitted-set checks, the key service,
and the secure computation routines:

  dot-product   inner-product keys, one per operand row
  conv-kernel   a single inner-product key for one flattened filter
  add sub mul div   element-wise keys, one per cell, commitment-bound

A permitted set F is a subset of {dot-product, add, sub, mul, div};
conv-kernel requests are inner-product keys and are authorized by
dot-product membership.
"""

from __future__ import annotations

from dataclasses import dataclass

from .febo import FeboFunctionKey, FeboMpk
from .feip import FeipFunctionKey, FeipMpk
from .group import GroupElement, GroupParams

DOT = "dot-product"
CONV_KERNEL = "conv-kernel"
ELEMENTWISE = ("add", "sub", "mul", "div")
ADD, SUB, MUL, DIV = ELEMENTWISE
PERMITTED_ALL = frozenset((DOT,) + ELEMENTWISE)
REQUEST_FUNCTIONS = (DOT, CONV_KERNEL) + ELEMENTWISE


@dataclass(frozen=True)
class KeyRequest:
    """One key-derivation request.

    operand rows are quantized integers: weight rows for dot-product, the
    flattened kernel (single row) for conv-kernel, or the full operand grid
    for element-wise ops. Element-wise requests carry exactly one commitment
    per operand cell; the others carry none.
    """

    function: str
    operand: tuple[tuple[int, ...], ...]
    cmts: tuple[tuple[GroupElement, ...], ...] | None = None


@dataclass(frozen=True)
class KeyResponse:
    """Derived keys: inner-product keys per row, or an element-wise key grid."""

    function: str
    feip_keys: tuple[FeipFunctionKey, ...] | None = None
    febo_keys: tuple[tuple[FeboFunctionKey, ...], ...] | None = None


@dataclass(frozen=True)
class MpkBundle:
    """Everything a client or server needs: group and both public keys."""

    params: GroupParams
    feip_mpk: FeipMpk
    febo_mpk: FeboMpk
