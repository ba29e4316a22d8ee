"""Group arithmetic and BSGS tests, cross-checked against naive big-int oracles."""

import random

import pytest
from gmpy2 import is_prime
from hypothesis import given, settings
from hypothesis import strategies as st

from fenn.errors import NotInRange
from fenn.group import dlog_bsgs, group_gen, pow_element, sample_scalar


class TestGroupGen:
    def test_deterministic_under_seed(self):
        a = group_gen(64, seed=42)
        b = group_gen(64, seed=42)
        assert (a.modulus, a.order, a.generator) == (b.modulus, b.order, b.generator)

    def test_different_seeds_differ(self):
        assert group_gen(64, seed=1).order != group_gen(64, seed=2).order

    def test_exact_bit_length(self):
        for lam in (32, 64):
            p = group_gen(lam, seed=5).order
            assert p.bit_length() == lam

    def test_safe_prime_structure(self, params64):
        assert params64.modulus == 2 * params64.order + 1
        assert is_prime(params64.order)
        assert is_prime(params64.modulus)

    def test_generator_has_subgroup_order(self, params64):
        g = params64.g
        assert g.value != 1
        assert pow_element(g, params64.order).value == 1

    def test_rejects_tiny_lambda(self):
        with pytest.raises(ValueError):
            group_gen(16)


class TestScalars:
    def test_seeded_rng_reproducible(self, params64):
        assert sample_scalar(params64, random.Random(9)) == sample_scalar(
            params64, random.Random(9)
        )

    def test_range(self, params64, rng):
        for _ in range(1000):
            s = sample_scalar(params64, rng)
            assert 0 <= s < params64.order

    def test_empirical_mean_near_half_order(self, params64):
        r = random.Random(0)
        n = 10_000
        mean = sum(sample_scalar(params64, r) for _ in range(n)) / n
        assert abs(mean - params64.order / 2) < 0.05 * params64.order


class TestPow:
    def test_identity_exponents(self, params64):
        g = params64.g
        assert pow_element(g, 0).value == 1
        assert pow_element(g, params64.order).value == 1

    def test_matches_builtin_pow_oracle(self, params64, rng):
        g = params64.g
        for _ in range(100):
            e = rng.randrange(-(2**80), 2**80)
            expected = pow(params64.generator, e % params64.order, params64.modulus)
            assert pow_element(g, e).value == expected

    def test_tower_rule_small_exponents(self, params64, rng):
        g = params64.g
        for _ in range(50):
            a, b = rng.randrange(1, 1000), rng.randrange(1, 1000)
            lhs = pow_element(pow_element(g, a), b)
            rhs = pow_element(g, a * b % params64.order)
            assert lhs == rhs

    def test_negative_exponent_is_inverse(self, params64):
        g = params64.g
        prod = pow_element(g, 5) * pow_element(g, -5)
        assert prod.value == 1

    def test_element_product_adds_exponents(self, params64, rng):
        g = params64.g
        for _ in range(50):
            a, b = rng.randrange(10**6), rng.randrange(10**6)
            assert pow_element(g, a) * pow_element(g, b) == pow_element(g, a + b)


class TestDlogBsgs:
    def test_spec_examples(self, params64):
        g = params64.g
        assert dlog_bsgs(params64, pow_element(g, 5), 10) == 5
        assert dlog_bsgs(params64, params64.identity, 0) == 0
        assert dlog_bsgs(params64, pow_element(g, -3), 10) == -3

    def test_exhaustive_small_window(self, params64):
        g = params64.g
        for z in range(-150, 151):
            assert dlog_bsgs(params64, pow_element(g, z), 150) == z

    @given(z=st.integers(min_value=-100_000, max_value=100_000))
    @settings(max_examples=200, deadline=None)
    def test_random_exponents_round_trip(self, params64, z):
        target = pow_element(params64.g, z)
        assert dlog_bsgs(params64, target, 100_000) == z

    def test_out_of_range_raises(self, params64):
        target = pow_element(params64.g, 501)
        with pytest.raises(NotInRange):
            dlog_bsgs(params64, target, 500)

    def test_nonidentity_with_zero_bound_raises(self, params64):
        with pytest.raises(NotInRange):
            dlog_bsgs(params64, params64.g, 0)

    def test_bound_exceeding_unique_window_rejected(self, params64):
        with pytest.raises(ValueError):
            dlog_bsgs(params64, params64.g, params64.order)

    def test_table_reuse_across_calls(self, params64):
        from fenn.group import _TABLES, table_size_for

        dlog_bsgs(params64, pow_element(params64.g, 77), 5000)
        key = (params64.modulus, params64.generator, table_size_for(5000))
        assert key in _TABLES
        before = len(_TABLES)
        dlog_bsgs(params64, pow_element(params64.g, -4999), 5000)
        assert len(_TABLES) == before
