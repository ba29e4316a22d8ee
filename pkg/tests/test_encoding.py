"""Fixed-point codec tests: rounding rule, round trips, bound bookkeeping."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from fenn.encoding import (
    FixedPointCodec,
    QuantTensor,
    dequantize,
    dot_bound,
    elementwise_bound,
    operand_dot_bound,
    quantize,
)
from fenn.errors import OutOfRange

CODEC = FixedPointCodec()


class TestQuantize:
    def test_two_decimal_examples(self):
        assert quantize(np.array([3.14159]), CODEC).data[0] == 314
        assert quantize(np.array([0.0]), CODEC).data[0] == 0

    def test_half_away_from_zero(self):
        assert quantize(np.array([-0.005]), CODEC).data[0] == -1
        assert quantize(np.array([0.005]), CODEC).data[0] == 1
        assert quantize(np.array([2.675]), CODEC).data[0] == 268

    def test_out_of_range(self):
        codec = FixedPointCodec(scale_digits=2, value_bound=100)
        with pytest.raises(OutOfRange):
            quantize(np.array([1.01]), codec)

    def test_scale_power_is_one(self):
        assert quantize(np.zeros(3), CODEC).scale_power == 1

    @given(
        values=hnp.arrays(
            np.float64,
            st.integers(1, 20),
            elements=st.floats(-250.0, 250.0, allow_nan=False),
        )
    )
    @settings(max_examples=200)
    def test_error_at_most_half_step(self, values):
        qt = quantize(values, CODEC)
        back = dequantize(qt, CODEC)
        assert np.all(np.abs(back - values) <= 0.5 / CODEC.scale_factor + 1e-12)


class TestDequantize:
    def test_examples(self):
        assert dequantize(QuantTensor(np.array([314]), 1), CODEC) == pytest.approx(3.14)
        assert dequantize(QuantTensor(np.array([10000]), 2), CODEC) == pytest.approx(1.0)

    def test_round_trip_on_grid(self, rng):
        grid = np.array([rng.randrange(-25500, 25501) for _ in range(100)]) / 100.0
        qt = quantize(grid, CODEC)
        assert np.array_equal(dequantize(qt, CODEC), grid)
        assert np.array_equal(quantize(dequantize(qt, CODEC), CODEC).data, qt.data)

    def test_power_zero_passthrough(self):
        qt = QuantTensor(np.array([7, -3]), 0)
        assert np.array_equal(dequantize(qt, CODEC), [7.0, -3.0])


class TestBounds:
    def test_dot_bound_formula(self):
        assert dot_bound(784, CODEC) == 784 * 25500**2
        assert dot_bound(1, FixedPointCodec(scale_digits=0, value_bound=1)) == 1

    def test_dot_bound_dominates_random_products(self, rng):
        codec = FixedPointCodec(scale_digits=2, value_bound=500)
        b = dot_bound(6, codec)
        for _ in range(1000):
            x = [rng.randrange(-500, 501) for _ in range(6)]
            y = [rng.randrange(-500, 501) for _ in range(6)]
            assert abs(sum(a * c for a, c in zip(x, y))) <= b

    def test_operand_bound_dominates_and_tightens(self, rng):
        codec = FixedPointCodec(scale_digits=2, value_bound=500)
        y = [rng.randrange(-50, 51) for _ in range(6)]
        b = operand_dot_bound(y, codec)
        assert b <= dot_bound(6, codec)
        for _ in range(500):
            x = [rng.randrange(-500, 501) for _ in range(6)]
            assert abs(sum(a * c for a, c in zip(x, y))) <= b

    def test_elementwise_bounds(self):
        codec = FixedPointCodec(scale_digits=2, value_bound=100)
        assert elementwise_bound("add", 50, codec) == 150
        assert elementwise_bound("sub", -50, codec) == 150
        assert elementwise_bound("mul", 7, codec) == 700
        assert elementwise_bound("div", 3, codec) == 100

    def test_scale_power_tracks_shadow_computation(self, rng):
        # Integer dot of two power-1 tensors, read back at power 2, lands within
        # the accumulated rounding error of the real-valued computation.
        x = np.array([rng.uniform(-2, 2) for _ in range(32)])
        y = np.array([rng.uniform(-2, 2) for _ in range(32)])
        qx, qy = quantize(x, CODEC), quantize(y, CODEC)
        dot_q = QuantTensor(np.array([np.dot(qx.data, qy.data)]), 2)
        shadow = float(np.dot(x, y))
        step = 0.5 / CODEC.scale_factor
        tol = 32 * (step * (np.max(np.abs(x)) + np.max(np.abs(y))) + step**2)
        assert abs(dequantize(dot_q, CODEC)[0] - shadow) <= tol


class TestCodecValidation:
    def test_bad_codec_params(self):
        with pytest.raises(ValueError):
            FixedPointCodec(scale_digits=-1)
        with pytest.raises(ValueError):
            FixedPointCodec(value_bound=0)

    def test_bad_scale_power(self):
        with pytest.raises(ValueError):
            QuantTensor(np.array([1]), -1)
