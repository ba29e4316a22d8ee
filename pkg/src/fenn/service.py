"""HTTP key service: the authority behind a small JSON API.

create_app wraps an Authority in a FastAPI application with
pydantic-validated request and response bodies. HttpAuthority is the
matching client adapter; it satisfies the derive(KeyRequest) protocol the
secure computation modules expect, so a training run can point at a
remote authority by URL instead of an in-process object.

The service only ever returns public material: the mpk bundle, derived
function keys, and issuance counters. Master secrets stay inside the
Authority object and have no route.
"""

from __future__ import annotations

import httpx
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from . import serialize
from .authority import Authority
from .errors import FennError, MalformedRequest, UnsupportedFunction
from .messages import KeyRequest, KeyResponse, MpkBundle


class GroupParamsModel(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    modulus: str
    order: str
    generator: str
    lam: int = Field(alias="lambda")


class FeipMpkModel(BaseModel):
    h: list[str]


class FeboMpkModel(BaseModel):
    h: str


class MpkBundleModel(BaseModel):
    version: int
    params: GroupParamsModel
    feip: FeipMpkModel
    febo: FeboMpkModel


class KeyRequestModel(BaseModel):
    function: str
    operand: list[list[int]]
    cmts: list[list[str]] | None = None


class FeipKeyModel(BaseModel):
    sk: str
    y: list[int]


class FeboKeyModel(BaseModel):
    sk: str
    op: str
    y: int
    cmt_ref: str


class KeyResponseModel(BaseModel):
    function: str
    feip_keys: list[FeipKeyModel] | None = None
    febo_keys: list[list[FeboKeyModel]] | None = None


class StatusModel(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    eta: int
    lam: int = Field(alias="lambda")
    permitted: list[str]
    keys_issued: dict[str, int]
    requests: int


def create_app(authority: Authority) -> FastAPI:
    """Expose one authority's public operations over HTTP."""
    app = FastAPI(title="fenn key authority", version=str(serialize.FORMAT_VERSION))

    @app.exception_handler(FennError)
    async def _fenn_error(_, exc: FennError):
        status = 403 if isinstance(exc, UnsupportedFunction) else 400
        return JSONResponse(
            status_code=status,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.get("/v1/mpk", response_model=MpkBundleModel, response_model_by_alias=True)
    def get_mpk():
        return MpkBundleModel.model_validate(
            serialize.mpk_bundle_to_obj(authority.mpk())
        )

    @app.post("/v1/keys", response_model=KeyResponseModel)
    def post_keys(body: KeyRequestModel):
        req = serialize.key_request_from_obj(
            body.model_dump(), authority.state.params
        )
        resp = authority.derive(req)
        return KeyResponseModel.model_validate(serialize.key_response_to_obj(resp))

    @app.get("/v1/status", response_model=StatusModel, response_model_by_alias=True)
    def get_status():
        return StatusModel.model_validate(authority.status())

    return app


class HttpAuthority:
    """Client-side adapter: authority.derive over HTTP.

    Accepts any httpx-compatible client (including FastAPI's TestClient),
    or builds one from a base URL. Group parameters are fetched once from
    the mpk route and cached for response decoding.
    """

    def __init__(self, base_url: str | None = None, client=None):
        if client is None:
            if base_url is None:
                raise MalformedRequest("HttpAuthority needs a base_url or a client")
            client = httpx.Client(base_url=base_url, timeout=120.0)
        self._client = client
        self._mpk: MpkBundle | None = None

    def _raise_for_status(self, resp) -> None:
        if resp.status_code == 200:
            return
        try:
            detail = resp.json().get("detail", resp.text)
            name = resp.json().get("error", "")
        except ValueError:
            detail, name = resp.text, ""
        if name == "UnsupportedFunction" or resp.status_code == 403:
            raise UnsupportedFunction(detail)
        raise MalformedRequest(f"authority returned {resp.status_code}: {detail}")

    def mpk(self) -> MpkBundle:
        if self._mpk is None:
            resp = self._client.get("/v1/mpk")
            self._raise_for_status(resp)
            self._mpk = serialize.mpk_bundle_from_obj(resp.json())
        return self._mpk

    def derive(self, req: KeyRequest) -> KeyResponse:
        resp = self._client.post("/v1/keys", json=serialize.key_request_to_obj(req))
        self._raise_for_status(resp)
        return serialize.key_response_from_obj(resp.json(), self.mpk().params)

    def status(self) -> dict:
        resp = self._client.get("/v1/status")
        self._raise_for_status(resp)
        return resp.json()

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "HttpAuthority":
        return self

    def __exit__(self, *_) -> None:
        self.close()
