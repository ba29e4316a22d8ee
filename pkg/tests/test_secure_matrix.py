"""End-to-end secure matrix computation against plaintext integer oracles."""

import random

import numpy as np
import pytest

from fenn.authority import Authority
from fenn.encoding import FixedPointCodec, QuantTensor
from fenn.errors import KeyMismatch, ShapeMismatch, UnsupportedFunction
from fenn.messages import DOT
from fenn.secure_matrix import (
    pre_process_encryption,
    pre_process_key_derive,
    secure_computation,
)

CODEC = FixedPointCodec(scale_digits=2, value_bound=500)


@pytest.fixture(scope="module")
def authority(params64):
    return Authority.create(params64, eta=16, rng=random.Random(21))


@pytest.fixture(scope="module")
def mpks(authority):
    bundle = authority.mpk()
    return bundle.feip_mpk, bundle.febo_mpk


def qt(data):
    return QuantTensor(np.asarray(data, dtype=np.int64), scale_power=1)


def encrypt(x, mpks, rng, **kw):
    return pre_process_encryption(qt(x), mpks[0], mpks[1], rng, **kw)


def compute(enc, f, y, authority, mpks, workers=1):
    y = qt(y)
    keys = pre_process_key_derive(y, f, authority, enc_ref=enc)
    return secure_computation(enc, f, keys, y, mpks[0], mpks[1], CODEC, workers=workers)


class TestPreProcessEncryption:
    def test_shape_bookkeeping(self, mpks, rng):
        enc = encrypt(np.arange(6).reshape(3, 2), mpks, rng)
        assert enc.shape == (3, 2)
        assert len(enc.col_cts) == 2 and all(ct.eta == 3 for ct in enc.col_cts)
        assert len(enc.elem_cts) == 3 and all(len(r) == 2 for r in enc.elem_cts)

    def test_elementwise_view_suppressible(self, mpks, rng):
        enc = encrypt(np.ones((3, 2)), mpks, rng, include_elementwise=False)
        assert enc.elem_cts is None

    def test_rejects_non_2d(self, mpks, rng):
        with pytest.raises(ShapeMismatch):
            pre_process_encryption(qt(np.ones(4)), mpks[0], mpks[1], rng)


class TestDotProduct:
    def test_identity_probe_recovers_scaled_matrix(self, authority, mpks, rng):
        x = np.array([[3, -7], [0, 5]])
        enc = encrypt(x, mpks, rng)
        eye = np.eye(2, dtype=np.int64) * CODEC.scale_factor
        z = compute(enc, DOT, eye, authority, mpks)
        assert np.array_equal(z.data, CODEC.scale_factor * x)
        assert z.scale_power == 2

    def test_matches_integer_matmul_oracle(self, authority, mpks, rng):
        x = np.array([[rng.randrange(-50, 51) for _ in range(2)] for _ in range(3)])
        y = np.array([[rng.randrange(-50, 51) for _ in range(3)] for _ in range(2)])
        enc = encrypt(x, mpks, rng)
        z = compute(enc, DOT, y, authority, mpks)
        assert np.array_equal(z.data, y @ x)

    def test_zero_matrix(self, authority, mpks, rng):
        enc = encrypt(np.zeros((4, 4)), mpks, rng)
        y = np.array([[rng.randrange(-9, 9) for _ in range(4)] for _ in range(2)])
        z = compute(enc, DOT, y, authority, mpks)
        assert not z.data.any()

    def test_shape_mismatch_rejected(self, authority, mpks, rng):
        enc = encrypt(np.ones((3, 2)), mpks, rng)
        with pytest.raises(ShapeMismatch):
            compute(enc, DOT, np.ones((2, 4), dtype=np.int64), authority, mpks)

    def test_parallel_equals_serial(self, authority, mpks, rng):
        x = np.array([[rng.randrange(-50, 51) for _ in range(4)] for _ in range(5)])
        y = np.array([[rng.randrange(-50, 51) for _ in range(5)] for _ in range(3)])
        enc = encrypt(x, mpks, rng)
        yq = qt(y)
        keys = pre_process_key_derive(yq, DOT, authority, enc_ref=enc)
        serial = secure_computation(enc, DOT, keys, yq, mpks[0], mpks[1], CODEC, workers=1)
        para = secure_computation(enc, DOT, keys, yq, mpks[0], mpks[1], CODEC, workers=4)
        assert np.array_equal(serial.data, para.data)


class TestElementwise:
    @pytest.mark.parametrize("op,oracle", [
        ("add", lambda x, y: x + y),
        ("sub", lambda x, y: x - y),
        ("mul", lambda x, y: x * y),
    ])
    def test_matches_integer_oracle(self, authority, mpks, rng, op, oracle):
        x = np.array([[rng.randrange(-100, 101) for _ in range(3)] for _ in range(3)])
        y = np.array([[rng.randrange(-100, 101) for _ in range(3)] for _ in range(3)])
        enc = encrypt(x, mpks, rng)
        z = compute(enc, op, y, authority, mpks)
        assert np.array_equal(z.data, oracle(x, y))

    def test_div_on_exact_multiples(self, authority, mpks, rng):
        y = np.array([[rng.randrange(1, 10) for _ in range(3)] for _ in range(3)])
        quot = np.array([[rng.randrange(-50, 51) for _ in range(3)] for _ in range(3)])
        enc = encrypt(y * quot, mpks, rng)
        z = secure_computation(
            enc,
            "div",
            pre_process_key_derive(qt(y), "div", authority, enc_ref=enc),
            qt(y),
            mpks[0],
            mpks[1],
            CODEC,
        )
        assert np.array_equal(z.data, quot)
        assert z.scale_power == 0

    def test_scale_powers(self, authority, mpks, rng):
        x = np.array([[12, -3]])
        enc = encrypt(x, mpks, rng)
        assert compute(enc, "add", np.array([[1, 2]]), authority, mpks).scale_power == 1
        assert compute(enc, "mul", np.array([[2, 2]]), authority, mpks).scale_power == 2

    def test_keys_bound_to_their_matrix(self, authority, mpks, rng):
        x = np.ones((2, 2), dtype=np.int64)
        enc_a = encrypt(x, mpks, rng)
        enc_b = encrypt(x, mpks, rng)
        y = qt(np.ones((2, 2), dtype=np.int64))
        keys_a = pre_process_key_derive(y, "sub", authority, enc_ref=enc_a)
        with pytest.raises(KeyMismatch):
            secure_computation(enc_b, "sub", keys_a, y, mpks[0], mpks[1], CODEC)

    def test_elementwise_needs_reference(self, authority):
        with pytest.raises(ShapeMismatch):
            pre_process_key_derive(qt(np.ones((2, 2), dtype=np.int64)), "sub", authority)

    def test_parallel_equals_serial(self, authority, mpks, rng):
        x = np.array([[rng.randrange(-100, 101) for _ in range(6)] for _ in range(6)])
        y = np.array([[rng.randrange(-100, 101) for _ in range(6)] for _ in range(6)])
        enc = encrypt(x, mpks, rng)
        yq = qt(y)
        keys = pre_process_key_derive(yq, "mul", authority, enc_ref=enc)
        serial = secure_computation(enc, "mul", keys, yq, mpks[0], mpks[1], CODEC, workers=1)
        para = secure_computation(enc, "mul", keys, yq, mpks[0], mpks[1], CODEC, workers=3)
        assert np.array_equal(serial.data, para.data)


class TestCrossSchemeConsistency:
    def test_feip_dot_equals_febo_mul_plus_summation(self, authority, mpks, rng):
        # The same product assembled two ways: inner-product keys on columns
        # versus element keys plus plaintext summation.
        x = np.array([[rng.randrange(-30, 31) for _ in range(2)] for _ in range(4)])
        y = np.array([[rng.randrange(-30, 31) for _ in range(4)] for _ in range(2)])
        enc = encrypt(x, mpks, rng)
        z_dot = compute(enc, DOT, y, authority, mpks)
        k, m = y.shape[0], x.shape[1]
        z_alt = np.zeros((k, m), dtype=np.int64)
        for i in range(k):
            operand = np.tile(y[i][:, None], (1, m))
            prod = compute(enc, "mul", operand, authority, mpks)
            z_alt[i] = prod.data.sum(axis=0)
        assert np.array_equal(z_dot.data, z_alt)


class TestValidation:
    def test_unknown_function(self, authority, mpks, rng):
        enc = encrypt(np.ones((2, 2)), mpks, rng)
        with pytest.raises(UnsupportedFunction):
            pre_process_key_derive(qt(np.ones((2, 2), dtype=np.int64)), "xor", authority, enc)

    def test_operand_must_match_keys(self, authority, mpks, rng):
        enc = encrypt(np.ones((2, 2)), mpks, rng)
        y1 = qt(np.ones((1, 2), dtype=np.int64))
        y2 = qt(np.full((1, 2), 2, dtype=np.int64))
        keys = pre_process_key_derive(y1, DOT, authority, enc_ref=enc)
        with pytest.raises(ShapeMismatch):
            secure_computation(enc, DOT, keys, y2, mpks[0], mpks[1], CODEC)
