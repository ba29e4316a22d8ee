"""JSON formats for keys, ciphertexts, bundles, checkpoints, and logs.

Group elements and exponents travel as lowercase hex strings; quantized
values, operands, and shapes travel as plain JSON integers; model
parameters travel as decimal floats (JSON floats round-trip binary64
exactly). Decoders raise MalformedInput naming the offending key path,
and file readers report the byte position of JSON syntax errors.

Master secret keys serialize only through the dedicated msk-file
functions used by the authority's own storage. Key responses and public
bundles have no msk fields by construction, and there is no encoder for
the authority state itself.
"""

from __future__ import annotations

import json
import os
from typing import Any

import numpy as np

from .encoding import FixedPointCodec
from .errors import MalformedInput
from .febo import FeboCiphertext, FeboFunctionKey, FeboMpk, FeboMsk
from .feip import FeipCiphertext, FeipFunctionKey, FeipMpk, FeipMsk
from .group import GroupElement, GroupParams
from .messages import KeyRequest, KeyResponse, MpkBundle, REQUEST_FUNCTIONS
from .nn_core import Hyperparams, LayerSpec, Params, LayerParams
from .secure_conv import ConvSpec, EncryptedWindowList
from .secure_matrix import EncryptedMatrix
from .training import BatchCiphertexts, ClientBundle

FORMAT_VERSION = 1

_LAYER_FIELDS = (
    "kind", "in_dim", "out_dim", "filter_size", "in_channels",
    "out_channels", "padding", "stride", "pool", "init_scale",
)


def _hex(value: int) -> str:
    return format(value, "x")


def _unhex(text: Any, path: str) -> int:
    if not isinstance(text, str):
        raise MalformedInput(f"{path}: expected a hex string, got {type(text).__name__}")
    try:
        return int(text, 16)
    except ValueError:
        raise MalformedInput(f"{path}: {text!r} is not valid hex") from None


def _get(obj: Any, key: str, path: str) -> Any:
    if not isinstance(obj, dict):
        raise MalformedInput(f"{path}: expected an object, got {type(obj).__name__}")
    if key not in obj:
        raise MalformedInput(f"{path}: missing key {key!r}")
    return obj[key]


def _int(obj: Any, key: str, path: str) -> int:
    value = _get(obj, key, path)
    if not isinstance(value, int) or isinstance(value, bool):
        raise MalformedInput(f"{path}.{key}: expected an integer")
    return value


def loads(text: str | bytes) -> Any:
    """json.loads that reports syntax errors as MalformedInput with position."""
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"invalid JSON at position {exc.pos}: {exc.msg}") from None


def read_json(path) -> Any:
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())


def write_json(path, obj: Any, mode: int | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")
    if mode is not None:
        os.chmod(path, mode)


# -- group ------------------------------------------------------------------

def params_to_obj(params: GroupParams) -> dict:
    return {
        "modulus": _hex(params.modulus),
        "order": _hex(params.order),
        "generator": _hex(params.generator),
        "lambda": params.lam,
    }


def params_from_obj(obj: Any, path: str = "params") -> GroupParams:
    return GroupParams(
        modulus=_unhex(_get(obj, "modulus", path), f"{path}.modulus"),
        order=_unhex(_get(obj, "order", path), f"{path}.order"),
        generator=_unhex(_get(obj, "generator", path), f"{path}.generator"),
        lam=_int(obj, "lambda", path),
    )


def _elem(obj: Any, params: GroupParams, path: str) -> GroupElement:
    return GroupElement(_unhex(obj, path), params)


# -- feip -------------------------------------------------------------------

def feip_ct_to_obj(ct: FeipCiphertext) -> dict:
    return {"ct0": _hex(ct.ct0.value), "ct": [_hex(c.value) for c in ct.ct]}


def feip_ct_from_obj(obj: Any, params: GroupParams, path: str = "ct") -> FeipCiphertext:
    raw = _get(obj, "ct", path)
    if not isinstance(raw, list):
        raise MalformedInput(f"{path}.ct: expected a list")
    return FeipCiphertext(
        ct0=_elem(_get(obj, "ct0", path), params, f"{path}.ct0"),
        ct=tuple(_elem(c, params, f"{path}.ct[{i}]") for i, c in enumerate(raw)),
    )


def feip_key_to_obj(fk: FeipFunctionKey) -> dict:
    return {"sk": _hex(fk.sk), "y": [int(v) for v in fk.y]}


def feip_key_from_obj(obj: Any, path: str = "key") -> FeipFunctionKey:
    y = _get(obj, "y", path)
    if not isinstance(y, list) or not all(isinstance(v, int) for v in y):
        raise MalformedInput(f"{path}.y: expected a list of integers")
    return FeipFunctionKey(sk=_unhex(_get(obj, "sk", path), f"{path}.sk"), y=tuple(y))


# -- febo -------------------------------------------------------------------

def febo_ct_to_obj(ct: FeboCiphertext) -> dict:
    return {"cmt": _hex(ct.cmt.value), "ct": _hex(ct.ct.value)}


def febo_ct_from_obj(obj: Any, params: GroupParams, path: str = "ct") -> FeboCiphertext:
    return FeboCiphertext(
        cmt=_elem(_get(obj, "cmt", path), params, f"{path}.cmt"),
        ct=_elem(_get(obj, "ct", path), params, f"{path}.ct"),
    )


def febo_key_to_obj(fk: FeboFunctionKey) -> dict:
    return {
        "sk": _hex(fk.sk.value),
        "op": fk.op,
        "y": int(fk.y),
        "cmt_ref": _hex(fk.cmt_ref.value),
    }


def febo_key_from_obj(obj: Any, params: GroupParams, path: str = "key") -> FeboFunctionKey:
    y = _get(obj, "y", path)
    if not isinstance(y, int) or isinstance(y, bool):
        raise MalformedInput(f"{path}.y: expected an integer")
    return FeboFunctionKey(
        sk=_elem(_get(obj, "sk", path), params, f"{path}.sk"),
        op=str(_get(obj, "op", path)),
        y=y,
        cmt_ref=_elem(_get(obj, "cmt_ref", path), params, f"{path}.cmt_ref"),
    )


# -- public/master key bundles ----------------------------------------------

def mpk_bundle_to_obj(mpk: MpkBundle) -> dict:
    return {
        "version": FORMAT_VERSION,
        "params": params_to_obj(mpk.params),
        "feip": {"h": [_hex(h.value) for h in mpk.feip_mpk.h]},
        "febo": {"h": _hex(mpk.febo_mpk.h.value)},
    }


def mpk_bundle_from_obj(obj: Any) -> MpkBundle:
    params = params_from_obj(_get(obj, "params", "mpk"))
    feip_obj = _get(obj, "feip", "mpk")
    h_list = _get(feip_obj, "h", "mpk.feip")
    if not isinstance(h_list, list) or not h_list:
        raise MalformedInput("mpk.feip.h: expected a non-empty list")
    feip_mpk = FeipMpk(
        params,
        tuple(_elem(h, params, f"mpk.feip.h[{i}]") for i, h in enumerate(h_list)),
    )
    febo_obj = _get(obj, "febo", "mpk")
    febo_mpk = FeboMpk(params, _elem(_get(febo_obj, "h", "mpk.febo"), params, "mpk.febo.h"))
    return MpkBundle(params=params, feip_mpk=feip_mpk, febo_mpk=febo_mpk)


def msk_file_to_obj(
    params: GroupParams,
    feip_msk: FeipMsk,
    febo_msk: FeboMsk,
    permitted: frozenset[str],
) -> dict:
    """The authority's private storage format; never part of any response."""
    return {
        "version": FORMAT_VERSION,
        "params": params_to_obj(params),
        "permitted": sorted(permitted),
        "feip_msk": {"s": [_hex(s) for s in feip_msk.s]},
        "febo_msk": {"s": _hex(febo_msk.s)},
    }


def msk_file_from_obj(obj: Any) -> tuple[GroupParams, FeipMsk, FeboMsk, frozenset[str]]:
    params = params_from_obj(_get(obj, "params", "msk"))
    s_list = _get(_get(obj, "feip_msk", "msk"), "s", "msk.feip_msk")
    if not isinstance(s_list, list) or not s_list:
        raise MalformedInput("msk.feip_msk.s: expected a non-empty list")
    feip_msk = FeipMsk(tuple(_unhex(s, f"msk.feip_msk.s[{i}]") for i, s in enumerate(s_list)))
    febo_msk = FeboMsk(_unhex(_get(_get(obj, "febo_msk", "msk"), "s", "msk.febo_msk"),
                              "msk.febo_msk.s"))
    permitted = _get(obj, "permitted", "msk")
    if not isinstance(permitted, list):
        raise MalformedInput("msk.permitted: expected a list")
    return params, feip_msk, febo_msk, frozenset(str(p) for p in permitted)


# -- key wire messages --------------------------------------------------------

def key_request_to_obj(req: KeyRequest) -> dict:
    return {
        "function": req.function,
        "operand": [[int(v) for v in row] for row in req.operand],
        "cmts": None if req.cmts is None else [
            [_hex(c.value) for c in row] for row in req.cmts
        ],
    }


def key_request_from_obj(obj: Any, params: GroupParams) -> KeyRequest:
    function = _get(obj, "function", "request")
    if function not in REQUEST_FUNCTIONS:
        raise MalformedInput(f"request.function: unknown function {function!r}")
    operand = _get(obj, "operand", "request")
    if not isinstance(operand, list):
        raise MalformedInput("request.operand: expected a list of rows")
    rows = []
    for i, row in enumerate(operand):
        if not isinstance(row, list) or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in row
        ):
            raise MalformedInput(f"request.operand[{i}]: expected a list of integers")
        rows.append(tuple(row))
    cmts_obj = obj.get("cmts") if isinstance(obj, dict) else None
    cmts = None
    if cmts_obj is not None:
        if not isinstance(cmts_obj, list):
            raise MalformedInput("request.cmts: expected a list of rows")
        cmts = tuple(
            tuple(_elem(c, params, f"request.cmts[{i}][{j}]") for j, c in enumerate(row))
            for i, row in enumerate(cmts_obj)
        )
    return KeyRequest(function=function, operand=tuple(rows), cmts=cmts)


def key_response_to_obj(resp: KeyResponse) -> dict:
    return {
        "function": resp.function,
        "feip_keys": None if resp.feip_keys is None else [
            feip_key_to_obj(k) for k in resp.feip_keys
        ],
        "febo_keys": None if resp.febo_keys is None else [
            [febo_key_to_obj(k) for k in row] for row in resp.febo_keys
        ],
    }


def key_response_from_obj(obj: Any, params: GroupParams) -> KeyResponse:
    feip_obj = obj.get("feip_keys") if isinstance(obj, dict) else None
    febo_obj = obj.get("febo_keys") if isinstance(obj, dict) else None
    feip_keys = None
    if feip_obj is not None:
        feip_keys = tuple(
            feip_key_from_obj(k, f"response.feip_keys[{i}]") for i, k in enumerate(feip_obj)
        )
    febo_keys = None
    if febo_obj is not None:
        febo_keys = tuple(
            tuple(
                febo_key_from_obj(k, params, f"response.febo_keys[{i}][{j}]")
                for j, k in enumerate(row)
            )
            for i, row in enumerate(febo_obj)
        )
    return KeyResponse(
        function=str(_get(obj, "function", "response")),
        feip_keys=feip_keys,
        febo_keys=febo_keys,
    )


# -- encrypted containers -----------------------------------------------------

def enc_matrix_to_obj(mat: EncryptedMatrix) -> dict:
    return {
        "shape": list(mat.shape),
        "scale_power": mat.scale_power,
        "columns": [feip_ct_to_obj(c) for c in mat.col_cts],
        "elements": None if mat.elem_cts is None else [
            [febo_ct_to_obj(c) for c in row] for row in mat.elem_cts
        ],
    }


def enc_matrix_from_obj(obj: Any, params: GroupParams, path: str = "matrix") -> EncryptedMatrix:
    shape = _get(obj, "shape", path)
    if not (isinstance(shape, list) and len(shape) == 2):
        raise MalformedInput(f"{path}.shape: expected [rows, cols]")
    cols = _get(obj, "columns", path)
    if not isinstance(cols, list):
        raise MalformedInput(f"{path}.columns: expected a list")
    col_cts = tuple(
        feip_ct_from_obj(c, params, f"{path}.columns[{j}]") for j, c in enumerate(cols)
    )
    elems_obj = obj.get("elements")
    elem_cts = None
    if elems_obj is not None:
        elem_cts = tuple(
            tuple(
                febo_ct_from_obj(c, params, f"{path}.elements[{i}][{j}]")
                for j, c in enumerate(row)
            )
            for i, row in enumerate(elems_obj)
        )
    return EncryptedMatrix(
        shape=(shape[0], shape[1]),
        col_cts=col_cts,
        elem_cts=elem_cts,
        scale_power=_int(obj, "scale_power", path),
    )


def conv_spec_to_obj(spec: ConvSpec) -> dict:
    return {
        "height": spec.height,
        "width": spec.width,
        "channels": spec.channels,
        "filter_size": spec.filter_size,
        "padding": spec.padding,
        "stride": spec.stride,
        "filter_count": spec.filter_count,
    }


def conv_spec_from_obj(obj: Any, path: str = "conv_spec") -> ConvSpec:
    return ConvSpec(
        height=_int(obj, "height", path),
        width=_int(obj, "width", path),
        channels=_int(obj, "channels", path),
        filter_size=_int(obj, "filter_size", path),
        padding=_int(obj, "padding", path),
        stride=_int(obj, "stride", path),
        filter_count=_int(obj, "filter_count", path),
    )


def enc_windows_to_obj(t: EncryptedWindowList) -> dict:
    return {
        "spec": conv_spec_to_obj(t.spec),
        "scale_power": t.scale_power,
        "windows": [feip_ct_to_obj(w) for w in t.windows],
    }


def enc_windows_from_obj(
    obj: Any, params: GroupParams, path: str = "windows"
) -> EncryptedWindowList:
    wins = _get(obj, "windows", path)
    if not isinstance(wins, list):
        raise MalformedInput(f"{path}.windows: expected a list")
    return EncryptedWindowList(
        spec=conv_spec_from_obj(_get(obj, "spec", path), f"{path}.spec"),
        windows=tuple(
            feip_ct_from_obj(w, params, f"{path}.windows[{i}]") for i, w in enumerate(wins)
        ),
        scale_power=_int(obj, "scale_power", path),
    )


# -- codec and client bundle --------------------------------------------------

def codec_to_obj(codec: FixedPointCodec) -> dict:
    return {"scale_digits": codec.scale_digits, "value_bound": codec.value_bound}


def codec_from_obj(obj: Any, path: str = "codec") -> FixedPointCodec:
    return FixedPointCodec(
        scale_digits=_int(obj, "scale_digits", path),
        value_bound=_int(obj, "value_bound", path),
    )


def bundle_to_obj(bundle: ClientBundle) -> dict:
    batches = []
    for batch in bundle.batches:
        if isinstance(batch.features, EncryptedMatrix):
            features: Any = enc_matrix_to_obj(batch.features)
        else:
            features = [enc_windows_to_obj(w) for w in batch.features]
        batches.append({
            "index": batch.index,
            "features": features,
            "labels": enc_matrix_to_obj(batch.labels),
        })
    return {
        "version": FORMAT_VERSION,
        "codec": codec_to_obj(bundle.codec),
        "shapes": {
            "features": list(bundle.feature_shape),
            "labels": list(bundle.label_shape),
        },
        "conv_spec": None if bundle.conv_spec is None else conv_spec_to_obj(bundle.conv_spec),
        "batches": batches,
    }


def bundle_from_obj(obj: Any, params: GroupParams) -> ClientBundle:
    version = _int(obj, "version", "bundle")
    if version != FORMAT_VERSION:
        raise MalformedInput(f"bundle.version: unsupported version {version}")
    codec = codec_from_obj(_get(obj, "codec", "bundle"), "bundle.codec")
    shapes = _get(obj, "shapes", "bundle")
    feature_shape = tuple(_get(shapes, "features", "bundle.shapes"))
    label_shape = tuple(_get(shapes, "labels", "bundle.shapes"))
    conv_obj = obj.get("conv_spec")
    conv_spec = None if conv_obj is None else conv_spec_from_obj(conv_obj, "bundle.conv_spec")
    raw_batches = _get(obj, "batches", "bundle")
    if not isinstance(raw_batches, list):
        raise MalformedInput("bundle.batches: expected a list")
    batches = []
    for i, raw in enumerate(raw_batches):
        path = f"bundle.batches[{i}]"
        feats_obj = _get(raw, "features", path)
        if isinstance(feats_obj, list):
            features: Any = tuple(
                enc_windows_from_obj(w, params, f"{path}.features[{k}]")
                for k, w in enumerate(feats_obj)
            )
        else:
            features = enc_matrix_from_obj(feats_obj, params, f"{path}.features")
        batches.append(BatchCiphertexts(
            index=_int(raw, "index", path),
            features=features,
            labels=enc_matrix_from_obj(_get(raw, "labels", path), params, f"{path}.labels"),
        ))
    return ClientBundle(
        codec=codec,
        feature_shape=feature_shape,
        label_shape=(label_shape[0], label_shape[1]),
        batches=tuple(batches),
        conv_spec=conv_spec,
    )


# -- model checkpoints ---------------------------------------------------------

def checkpoint_to_obj(layers: list[LayerSpec], params: Params, hyper: Hyperparams) -> dict:
    return {
        "version": FORMAT_VERSION,
        "layers": [
            {field: getattr(spec, field) for field in _LAYER_FIELDS} for spec in layers
        ],
        "params": [
            None if p is None else {"w": p.w.tolist(), "b": p.b.tolist()}
            for p in params
        ],
        "hyperparams": {
            "lr": hyper.lr,
            "batch_size": hyper.batch_size,
            "epochs": hyper.epochs,
            "iters": hyper.iters,
            "seed": hyper.seed,
        },
        "seed": hyper.seed,
    }


def checkpoint_from_obj(obj: Any) -> tuple[list[LayerSpec], Params, Hyperparams]:
    layer_objs = _get(obj, "layers", "checkpoint")
    if not isinstance(layer_objs, list):
        raise MalformedInput("checkpoint.layers: expected a list")
    layers = []
    for i, lo in enumerate(layer_objs):
        if not isinstance(lo, dict) or "kind" not in lo:
            raise MalformedInput(f"checkpoint.layers[{i}]: expected an object with 'kind'")
        layers.append(LayerSpec(**{f: lo[f] for f in _LAYER_FIELDS if f in lo}))
    param_objs = _get(obj, "params", "checkpoint")
    params: Params = []
    for i, po in enumerate(param_objs):
        if po is None:
            params.append(None)
            continue
        path = f"checkpoint.params[{i}]"
        params.append(LayerParams(
            w=np.array(_get(po, "w", path), dtype=np.float64),
            b=np.array(_get(po, "b", path), dtype=np.float64),
        ))
    hyper_obj = _get(obj, "hyperparams", "checkpoint")
    hyper = Hyperparams(
        lr=float(_get(hyper_obj, "lr", "checkpoint.hyperparams")),
        batch_size=_int(hyper_obj, "batch_size", "checkpoint.hyperparams"),
        epochs=_int(hyper_obj, "epochs", "checkpoint.hyperparams"),
        iters=hyper_obj.get("iters"),
        seed=_int(hyper_obj, "seed", "checkpoint.hyperparams"),
    )
    return layers, params, hyper


# -- run logs -------------------------------------------------------------------

def read_run_log(path) -> list[dict]:
    """Parse a JSON-lines run log, reporting the first bad line."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise MalformedInput(
                    f"run log line {lineno}: invalid JSON at position {exc.pos}"
                ) from None
    return records
