"""Secure matrix computation: encrypt once, derive keys per function, decrypt cells.

The client encrypts a matrix X into two views:

  * one inner-product ciphertext per column (for dot products Y @ X), and
  * one single-operand ciphertext per element (for element-wise X op Y).

The server then obtains function keys for its own plaintext operand Y from
the authority and decrypts exactly Y @ X or X op Y, cell by cell. Both views
are produced up front even when one goes unused, mirroring how a client
commits to its data once without knowing which functions will be requested;
pass include_elementwise=False to suppress the element view for
dot-product-only workloads and halve encryption cost.

Element-wise keys are bound to the commitments of one specific encrypted
matrix; reusing a key batch against another matrix fails with KeyMismatch.

Decryption bounds are derived per call from the codec and the known operand
(never from the encrypted values), so a blown quantization window surfaces
as NotInRange rather than a silently wrong cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import febo, feip
from .encoding import FixedPointCodec, QuantTensor, elementwise_bound, operand_dot_bound
from .errors import ShapeMismatch, UnsupportedFunction
from .group import ensure_dlog_table
from .messages import DOT, ELEMENTWISE, KeyRequest
from .parallel import parallel_map

FUNCTIONS = (DOT,) + ELEMENTWISE


@dataclass(frozen=True)
class EncryptedMatrix:
    """Both ciphertext views of one n x m integer matrix at a fixed scale."""

    shape: tuple[int, int]
    col_cts: tuple[feip.FeipCiphertext, ...]
    elem_cts: tuple[tuple[febo.FeboCiphertext, ...], ...] | None
    scale_power: int = 1

    def __post_init__(self):
        n, m = self.shape
        if len(self.col_cts) != m or any(ct.eta != n for ct in self.col_cts):
            raise ShapeMismatch("column ciphertexts do not match the declared shape")
        if self.elem_cts is not None:
            if len(self.elem_cts) != n or any(len(row) != m for row in self.elem_cts):
                raise ShapeMismatch("element ciphertexts do not match the declared shape")


@dataclass(frozen=True)
class FunctionKeyBatch:
    """Keys for one function evaluation against one EncryptedMatrix.

    kind is "dot-product" (row_keys: one inner-product key per row of Y) or an
    element-wise op name (elem_keys: a grid congruent to Y, each key bound to
    the matching ciphertext commitment). operand is the quantized Y itself.
    """

    kind: str
    operand: np.ndarray
    row_keys: tuple[feip.FeipFunctionKey, ...] | None = None
    elem_keys: tuple[tuple[febo.FeboFunctionKey, ...], ...] | None = None


def pre_process_encryption(
    x: QuantTensor,
    feip_mpk: feip.FeipMpk,
    febo_mpk: febo.FeboMpk,
    rng=None,
    include_elementwise: bool = True,
) -> EncryptedMatrix:
    """Encrypt a 2-D quantized matrix into column and element ciphertexts."""
    if x.data.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D matrix, got shape {x.shape}")
    n, m = x.shape
    col_mpk = feip_mpk.prefix(n) if feip_mpk.eta != n else feip_mpk
    cols = tuple(
        feip.encrypt(col_mpk, x.data[:, j].tolist(), rng) for j in range(m)
    )
    elems = None
    if include_elementwise:
        elems = tuple(
            tuple(febo.encrypt(febo_mpk, int(x.data[i, j]), rng) for j in range(m))
            for i in range(n)
        )
    return EncryptedMatrix((n, m), cols, elems, scale_power=x.scale_power)


def pre_process_key_derive(
    y: QuantTensor,
    f: str,
    authority,
    enc_ref: EncryptedMatrix | None = None,
) -> FunctionKeyBatch:
    """Request the function keys for operand Y from the authority.

    authority exposes derive(KeyRequest) -> KeyResponse; both the in-process
    service object and the HTTP client adapter satisfy that protocol.
    """
    if f not in FUNCTIONS:
        raise UnsupportedFunction(f"unknown function {f!r}")
    if y.data.ndim != 2:
        raise ShapeMismatch(f"operand must be 2-D, got shape {y.shape}")
    operand = tuple(tuple(int(v) for v in row) for row in y.data)
    if f == DOT:
        if enc_ref is not None and y.shape[1] != enc_ref.shape[0]:
            raise ShapeMismatch(
                f"operand columns {y.shape[1]} != encrypted rows {enc_ref.shape[0]}"
            )
        resp = authority.derive(KeyRequest(function=f, operand=operand))
        return FunctionKeyBatch(kind=f, operand=y.data.copy(), row_keys=resp.feip_keys)
    if enc_ref is None:
        raise ShapeMismatch("element-wise key derivation needs the target matrix")
    if enc_ref.elem_cts is None:
        raise ShapeMismatch("target matrix was encrypted without its element view")
    if y.shape != enc_ref.shape:
        raise ShapeMismatch(f"operand shape {y.shape} != encrypted {enc_ref.shape}")
    cmts = tuple(
        tuple(ct.cmt for ct in row) for row in enc_ref.elem_cts
    )
    resp = authority.derive(KeyRequest(function=f, operand=operand, cmts=cmts))
    return FunctionKeyBatch(kind=f, operand=y.data.copy(), elem_keys=resp.febo_keys)


def secure_computation(
    enc: EncryptedMatrix,
    f: str,
    keys: FunctionKeyBatch,
    y: QuantTensor,
    feip_mpk: feip.FeipMpk,
    febo_mpk: febo.FeboMpk,
    codec: FixedPointCodec,
    workers: int = 1,
) -> QuantTensor:
    """Decrypt Y @ X (dot-product) or X op Y (element-wise) into exact integers.

    Output cells are independent; with workers > 1 they are decrypted by a
    forked worker pool with results identical to a serial run.
    """
    if f not in FUNCTIONS:
        raise UnsupportedFunction(f"unknown function {f!r}")
    if keys.kind != f:
        raise UnsupportedFunction(f"key batch is for {keys.kind!r}, not {f!r}")
    if not np.array_equal(keys.operand, y.data):
        raise ShapeMismatch("operand tensor differs from the one keys were derived for")
    n, m = enc.shape
    params = feip_mpk.params

    if f == DOT:
        if y.shape[1] != n:
            raise ShapeMismatch(f"operand columns {y.shape[1]} != encrypted rows {n}")
        k = y.shape[0]
        col_mpk = feip_mpk.prefix(n) if feip_mpk.eta != n else feip_mpk
        rows = [y.data[i].tolist() for i in range(k)]
        bound = max(operand_dot_bound(row, codec) for row in rows)
        ensure_dlog_table(params, bound)

        def dot_cell(flat: int) -> int:
            i, j = divmod(flat, m)
            return feip.decrypt(
                col_mpk, enc.col_cts[j], keys.row_keys[i], rows[i], bound
            )

        flat = parallel_map(dot_cell, k * m, workers)
        data = np.array(flat, dtype=np.int64).reshape(k, m)
        return QuantTensor(data, enc.scale_power + y.scale_power)

    if enc.elem_cts is None:
        raise ShapeMismatch("matrix was encrypted without its element view")
    if y.shape != enc.shape:
        raise ShapeMismatch(f"operand shape {y.shape} != encrypted {enc.shape}")
    if f in ("add", "sub") and y.scale_power != enc.scale_power:
        raise ShapeMismatch(
            f"add/sub need equal scales, got {enc.scale_power} and {y.scale_power}"
        )
    bound = max(
        elementwise_bound(f, int(v), codec) for v in np.nditer(y.data)
    )
    ensure_dlog_table(params, bound)

    def elem_cell(flat: int) -> int:
        i, j = divmod(flat, m)
        return febo.decrypt(
            febo_mpk,
            keys.elem_keys[i][j],
            enc.elem_cts[i][j],
            f,
            int(y.data[i, j]),
            bound,
        )

    flat = parallel_map(elem_cell, n * m, workers)
    data = np.array(flat, dtype=np.int64).reshape(n, m)
    if f in ("add", "sub"):
        power = enc.scale_power
    elif f == "mul":
        power = enc.scale_power + y.scale_power
    else:
        power = enc.scale_power - y.scale_power
        if power < 0:
            raise ShapeMismatch("division operand carries a larger scale than the data")
    return QuantTensor(data, power)
