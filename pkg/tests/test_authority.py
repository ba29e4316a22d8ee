"""Authority key service: permitted set, validation, issuance accounting."""

import random

import pytest

from fenn import febo, feip
from fenn.authority import Authority, authority_serve
from fenn.errors import MalformedRequest, UnsupportedFunction
from fenn.messages import CONV_KERNEL, DOT, KeyRequest


@pytest.fixture()
def authority(params64):
    return Authority.create(params64, eta=8, rng=random.Random(31))


def cmt_grid(authority, rows, cols, rng):
    mpk = authority.mpk().febo_mpk
    return tuple(
        tuple(febo.encrypt(mpk, 0, rng).cmt for _ in range(cols)) for _ in range(rows)
    )


class TestDerive:
    def test_dot_request_yields_row_keys(self, authority):
        req = KeyRequest(function=DOT, operand=((1, 2, 3), (4, 5, 6)))
        resp = authority_serve(req, authority)
        assert len(resp.feip_keys) == 2
        assert resp.feip_keys[0].y == (1, 2, 3)

    def test_conv_kernel_single_key(self, authority):
        resp = authority.derive(KeyRequest(function=CONV_KERNEL, operand=((1, 0, -1, 2),)))
        assert len(resp.feip_keys) == 1

    def test_elementwise_grid(self, authority, rng):
        cmts = cmt_grid(authority, 2, 3, rng)
        req = KeyRequest(function="sub", operand=((1, 2, 3), (4, 5, 6)), cmts=cmts)
        resp = authority.derive(req)
        assert len(resp.febo_keys) == 2 and len(resp.febo_keys[0]) == 3
        assert resp.febo_keys[1][2].cmt_ref == cmts[1][2]

    def test_keys_match_direct_derivation(self, authority, params64):
        resp = authority.derive(KeyRequest(function=DOT, operand=((7, -2, 0),)))
        direct = feip.key_derive(
            authority.state.feip_msk.prefix(3), [7, -2, 0], params64
        )
        assert resp.feip_keys[0].sk == direct.sk


class TestPermittedSet:
    def test_function_outside_set_refused(self, params64):
        auth = Authority.create(params64, eta=4, permitted={"add", "sub"}, rng=random.Random(1))
        with pytest.raises(UnsupportedFunction):
            auth.derive(KeyRequest(function=DOT, operand=((1, 2),)))

    def test_conv_kernel_rides_on_dot_permission(self, params64):
        auth = Authority.create(params64, eta=4, permitted={"sub"}, rng=random.Random(1))
        with pytest.raises(UnsupportedFunction):
            auth.derive(KeyRequest(function=CONV_KERNEL, operand=((1, 2),)))

    def test_unknown_function_refused(self, authority):
        with pytest.raises(UnsupportedFunction):
            auth = authority
            auth.derive(KeyRequest(function="xor", operand=((1,),)))

    def test_unknown_permitted_name_rejected_at_creation(self, params64):
        with pytest.raises(UnsupportedFunction):
            Authority.create(params64, eta=4, permitted={"dot-product", "matmul"})


class TestValidation:
    def test_ragged_operand(self, authority):
        with pytest.raises(MalformedRequest):
            authority.derive(KeyRequest(function=DOT, operand=((1, 2), (3,))))

    def test_non_integer_operand(self, authority):
        with pytest.raises(MalformedRequest):
            authority.derive(KeyRequest(function=DOT, operand=((1.5, 2.0),)))

    def test_elementwise_without_cmts(self, authority):
        with pytest.raises(MalformedRequest):
            authority.derive(KeyRequest(function="add", operand=((1, 2),)))

    def test_cmt_grid_shape_must_match(self, authority, rng):
        cmts = cmt_grid(authority, 1, 3, rng)
        with pytest.raises(MalformedRequest):
            authority.derive(KeyRequest(function="add", operand=((1, 2),), cmts=cmts))

    def test_dot_with_cmts_rejected(self, authority, rng):
        cmts = cmt_grid(authority, 1, 2, rng)
        with pytest.raises(MalformedRequest):
            authority.derive(KeyRequest(function=DOT, operand=((1, 2),), cmts=cmts))


class TestAccounting:
    def test_issuance_log_counts_operands_and_keys(self, authority, rng):
        authority.derive(KeyRequest(function=DOT, operand=((1, 2, 3), (4, 5, 6))))
        cmts = cmt_grid(authority, 2, 2, rng)
        authority.derive(KeyRequest(function="mul", operand=((1, 2), (3, 4)), cmts=cmts))
        log = authority.state.log
        assert (log[0].operand_elements, log[0].keys_issued) == (6, 2)
        assert (log[1].operand_elements, log[1].keys_issued) == (4, 4)
        status = authority.status()
        assert status["requests"] == 2
        assert status["keys_issued"] == {DOT: 2, "mul": 4}
