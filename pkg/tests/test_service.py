"""The HTTP authority service and its client adapter.

Routes are exercised through FastAPI's in-process test client, including
a full secure computation and a short training run where every key
derivation crosses the HTTP boundary.
"""

import json
import random

import numpy as np
import pytest
from fastapi.testclient import TestClient

from fenn import serialize
from fenn.authority import Authority
from fenn.encoding import FixedPointCodec, QuantTensor
from fenn.errors import UnsupportedFunction
from fenn.messages import DOT, SUB
from fenn.nn_core import Hyperparams, build_mlp
from fenn.secure_matrix import (
    pre_process_encryption,
    pre_process_key_derive,
    secure_computation,
)
from fenn.service import HttpAuthority, create_app
from fenn.training import client_prepare, train, train_reference

CODEC = FixedPointCodec(scale_digits=2, value_bound=2000)


@pytest.fixture(scope="module")
def authority(params64):
    return Authority.create(params64, eta=16, rng=random.Random(31))


@pytest.fixture(scope="module")
def http_authority(authority):
    return HttpAuthority(client=TestClient(create_app(authority)))


class TestRoutes:
    def test_mpk_round_trip(self, authority, http_authority):
        assert http_authority.mpk() == authority.mpk()

    def test_status_counts_requests(self, authority, http_authority):
        before = http_authority.status()
        assert before["lambda"] == authority.state.params.lam
        from fenn.messages import KeyRequest

        http_authority.derive(KeyRequest(function=DOT, operand=((1, 2, 3),)))
        after = http_authority.status()
        assert after["requests"] == before["requests"] + 1
        assert after["keys_issued"].get(DOT, 0) >= 1

    def test_unknown_function_is_400(self, http_authority):
        client = http_authority._client
        resp = client.post("/v1/keys", json={"function": "frobnicate", "operand": [[1]]})
        assert resp.status_code == 400
        assert resp.json()["error"] == "MalformedInput"

    def test_not_permitted_is_403(self, params64):
        gated = Authority.create(
            params64, eta=4, permitted=frozenset({DOT}), rng=random.Random(1)
        )
        adapter = HttpAuthority(client=TestClient(create_app(gated)))
        from fenn.messages import KeyRequest

        resp = adapter._client.post(
            "/v1/keys", json={"function": SUB, "operand": [[1]], "cmts": [["ab"]]}
        )
        assert resp.status_code == 403
        with pytest.raises(UnsupportedFunction):
            adapter.derive(KeyRequest(function=SUB, operand=((1,),),
                                      cmts=((gated.mpk().febo_mpk.h,),)))

    def test_responses_leak_no_secrets(self, authority, http_authority):
        secrets_hex = [format(s, "x") for s in authority.state.feip_msk.s]
        secrets_hex.append(format(authority.state.febo_msk.s, "x"))
        client = http_authority._client
        for path in ("/v1/mpk", "/v1/status"):
            text = client.get(path).text
            for secret in secrets_hex:
                assert secret not in text

    def test_openapi_lists_only_public_routes(self, http_authority):
        spec = http_authority._client.get("/openapi.json").json()
        assert set(spec["paths"]) == {"/v1/mpk", "/v1/keys", "/v1/status"}


class TestSecureComputeOverHttp:
    def test_dot_product_end_to_end(self, http_authority, rng):
        mpk = http_authority.mpk()
        x = np.arange(12, dtype=np.int64).reshape(3, 4) - 5
        y = np.array([[2, -1, 3], [0, 4, -2]], dtype=np.int64)
        enc = pre_process_encryption(
            QuantTensor(x, 1), mpk.feip_mpk, mpk.febo_mpk, rng
        )
        keys = pre_process_key_derive(QuantTensor(y, 1), DOT, http_authority, enc_ref=enc)
        out = secure_computation(
            enc, DOT, keys, QuantTensor(y, 1), mpk.feip_mpk, mpk.febo_mpk, CODEC
        )
        assert np.array_equal(out.data, y @ x)

    def test_training_over_http_matches_reference(self, authority, http_authority):
        data_rng = np.random.default_rng(3)
        features = data_rng.normal(size=(6, 8))
        labels = data_rng.integers(0, 2, size=8)
        layers = build_mlp([6, 4, 2])
        hyper = Hyperparams(lr=0.3, batch_size=4, epochs=1, seed=2)
        mpk = http_authority.mpk()
        bundle = client_prepare(
            features, labels, mpk, CODEC, batch_size=4, num_classes=2,
            rng=random.Random(11),
        )
        run = train(bundle, layers, hyper, http_authority, mpk)
        ref = train_reference(features, labels, layers, hyper, CODEC, num_classes=2)
        for p, q in zip(run.params, ref.params):
            if p is None:
                assert q is None
                continue
            assert np.array_equal(p.w, q.w) and np.array_equal(p.b, q.b)
        assert [m["cost"] for m in run.metrics] == [m["cost"] for m in ref.metrics]


class TestWireShape:
    def test_key_response_model_matches_serializer(self, authority, http_authority):
        from fenn.messages import KeyRequest

        req = KeyRequest(function=DOT, operand=((1, 0, -2, 3),))
        over_http = http_authority._client.post(
            "/v1/keys", json=serialize.key_request_to_obj(req)
        ).json()
        direct = serialize.key_response_to_obj(authority.derive(req))
        assert set(over_http) == set(direct)
        assert over_http["function"] == DOT
        assert over_http["febo_keys"] is None
        # same y vector; sk values differ only if derivation were randomized
        assert over_http["feip_keys"][0]["y"] == direct["feip_keys"][0]["y"]
        assert over_http["feip_keys"][0]["sk"] == direct["feip_keys"][0]["sk"]

    def test_mpk_json_uses_hex_strings(self, http_authority):
        obj = http_authority._client.get("/v1/mpk").json()
        assert isinstance(obj["params"]["modulus"], str)
        int(obj["params"]["modulus"], 16)
        assert all(isinstance(h, str) for h in obj["feip"]["h"])
        assert json.dumps(obj)  # fully JSON-serializable
