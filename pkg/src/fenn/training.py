"""Three-party neural network training over encrypted data.

The client quantizes its features and one-hot labels and encrypts both
(inner-product ciphertexts per column, element-wise ciphertexts per
entry). The server trains the network but touches the features only
through the first layer's weighted sums (decrypted with inner-product
keys) and the labels only through the per-element difference against
its own predictions (decrypted with element-wise subtraction keys).
The authority derives every key on request and logs the issuance.

Because the server never sees the raw feature matrix, the first layer's
weight gradient (which needs the layer input itself) cannot be formed;
first-layer weights therefore stay at their initial random values while
the first-layer bias and every deeper parameter train normally.

A reference trainer runs the identical loop with plaintext integer
arithmetic substituted for decryption. Functional decryption is exact,
so the two trajectories agree bit for bit; `train` and
`train_reference` on the same data produce identical parameters and
identical metric logs (timings aside).
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from types import SimpleNamespace
from typing import Callable, Sequence

import numpy as np

from . import secure_conv, secure_matrix
from .encoding import (
    FixedPointCodec,
    QuantTensor,
    dequantize,
    operand_dot_bound,
    quantize,
)
from .errors import FennError, ShapeMismatch, UnsupportedFunction
from .feip import decrypt as feip_decrypt
from .group import ensure_dlog_table
from .messages import DOT, SUB, KeyRequest, MpkBundle, PERMITTED_ALL
from .nn_core import (
    Hyperparams,
    LayerSpec,
    Params,
    build_lenet5,
    build_mlp,
    forward,
    backward,
    init_params,
    loss_mse,
    loss_softmax_ce,
    sgd_update,
)
from .secure_conv import ConvSpec, EncryptedWindowList
from .secure_matrix import EncryptedMatrix

# Natural log of the smallest probability that still quantizes inside the
# default codec bound; predictions are clipped here before a secure cost
# evaluation so the log stays representable.
_MIN_LOG_PROB = -250.0


@dataclass(frozen=True, slots=True)
class BatchCiphertexts:
    """One batch of the client's encrypted features and labels."""

    index: int
    features: EncryptedMatrix | tuple[EncryptedWindowList, ...]
    labels: EncryptedMatrix


@dataclass(frozen=True, slots=True)
class ClientBundle:
    """Everything the client ships to the server for one training set."""

    codec: FixedPointCodec
    feature_shape: tuple[int, ...]
    label_shape: tuple[int, int]
    batches: tuple[BatchCiphertexts, ...]
    conv_spec: ConvSpec | None = None

    def __post_init__(self) -> None:
        for batch in self.batches:
            if isinstance(batch.features, EncryptedMatrix):
                width = batch.features.shape[1]
            else:
                width = len(batch.features)
            if batch.labels.shape[1] != width:
                raise ShapeMismatch(
                    f"batch {batch.index}: {width} feature columns but "
                    f"{batch.labels.shape[1]} label columns"
                )

    @property
    def sample_count(self) -> int:
        return sum(b.labels.shape[1] for b in self.batches)


@dataclass(slots=True)
class TrainRun:
    """A training run's configuration, state, and per-batch metrics."""

    layers: list[LayerSpec]
    hyper: Hyperparams
    permitted: frozenset[str]
    params: Params
    iteration: int = 0
    metrics: list[dict] = field(default_factory=list)


def one_hot(labels: Sequence[int], num_classes: int) -> np.ndarray:
    """Class ids -> a (num_classes, n) 0/1 matrix, one column per sample."""
    ids = np.asarray(labels, dtype=np.int64)
    if ids.ndim != 1:
        raise ShapeMismatch(f"labels must be 1-D, got shape {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= num_classes):
        raise ShapeMismatch(
            f"label ids span [{ids.min()}, {ids.max()}], outside {num_classes} classes"
        )
    out = np.zeros((num_classes, ids.size))
    out[ids, np.arange(ids.size)] = 1.0
    return out


def center_columns(
    train: np.ndarray, others: Sequence[np.ndarray] = ()
) -> tuple[np.ndarray, list[np.ndarray], np.ndarray]:
    """Subtract the per-row training mean from train and any companion sets."""
    mean = train.mean(axis=1, keepdims=True)
    return train - mean, [x - mean for x in others], mean


def client_prepare(
    features: np.ndarray,
    labels: Sequence[int],
    mpk: MpkBundle,
    codec: FixedPointCodec,
    batch_size: int,
    num_classes: int,
    conv_spec: ConvSpec | None = None,
    rng=None,
) -> ClientBundle:
    """Quantize and encrypt a training set into per-batch ciphertexts.

    Dense-first-layer models take features as a (rows, samples) matrix;
    convolutional ones take (samples, height, width, channels) images,
    which are windowed per conv_spec and encrypted window by window.
    """
    if batch_size < 1:
        raise ShapeMismatch("batch_size must be >= 1")
    labels = np.asarray(labels, dtype=np.int64)
    if conv_spec is None:
        if features.ndim != 2:
            raise ShapeMismatch(f"expected (rows, samples) features, got {features.shape}")
        n = features.shape[1]
        feature_shape: tuple[int, ...] = (features.shape[0], batch_size)
    else:
        if features.ndim != 4:
            raise ShapeMismatch(
                f"expected (samples, height, width, channels) images, got {features.shape}"
            )
        if features.shape[1:] != (conv_spec.height, conv_spec.width, conv_spec.channels):
            raise ShapeMismatch(
                f"images {features.shape[1:]} do not match conv spec "
                f"{(conv_spec.height, conv_spec.width, conv_spec.channels)}"
            )
        n = features.shape[0]
        feature_shape = features.shape[1:]
    if labels.shape != (n,):
        raise ShapeMismatch(f"{n} samples but {labels.shape} labels")

    onehot = one_hot(labels, num_classes)
    batches = []
    for index, lo in enumerate(range(0, n, batch_size)):
        hi = min(lo + batch_size, n)
        if conv_spec is None:
            xq = quantize(features[:, lo:hi], codec)
            enc_x: EncryptedMatrix | tuple[EncryptedWindowList, ...] = (
                secure_matrix.pre_process_encryption(
                    xq, mpk.feip_mpk, mpk.febo_mpk, rng
                )
            )
        else:
            enc_x = tuple(
                secure_conv.pre_process_encryption(
                    quantize(features[s], codec), conv_spec, mpk.feip_mpk, rng
                )
                for s in range(lo, hi)
            )
        yq = quantize(onehot[:, lo:hi], codec)
        enc_y = secure_matrix.pre_process_encryption(yq, mpk.feip_mpk, mpk.febo_mpk, rng)
        batches.append(BatchCiphertexts(index, enc_x, enc_y))
    return ClientBundle(
        codec=codec,
        feature_shape=feature_shape,
        label_shape=(num_classes, batch_size),
        batches=tuple(batches),
        conv_spec=conv_spec,
    )


def _loss_kind(layers: list[LayerSpec]) -> str:
    kind = layers[-1].kind
    if kind == "softmax":
        return "softmax_ce"
    if kind == "sigmoid":
        return "sigmoid_mse"
    raise ShapeMismatch(f"output layer must be softmax or sigmoid, not {kind!r}")


def _first_weight_layer(layers: list[LayerSpec]) -> LayerSpec:
    spec = layers[0]
    if spec.kind not in ("dense", "conv"):
        raise ShapeMismatch("the first layer must be dense or conv")
    return spec


class _EncryptedOps:
    """Per-batch secure computations against a key authority."""

    def __init__(
        self,
        bundle: ClientBundle,
        authority,
        mpk: MpkBundle,
        workers: int,
    ) -> None:
        self.bundle = bundle
        self.authority = authority
        self.mpk = mpk
        self.workers = workers

    def first_product(self, w1q: QuantTensor, batch: BatchCiphertexts) -> np.ndarray:
        codec = self.bundle.codec
        spec = self.bundle.conv_spec
        if spec is None:
            keys = secure_matrix.pre_process_key_derive(
                w1q, DOT, self.authority, enc_ref=batch.features
            )
            return secure_matrix.secure_computation(
                batch.features, DOT, keys, w1q,
                self.mpk.feip_mpk, self.mpk.febo_mpk, codec, self.workers,
            ).data
        maps = []
        for f in range(spec.filter_count):
            kq = QuantTensor(w1q.data[:, :, :, f], w1q.scale_power)
            fk = secure_conv.pre_process_key_derive(kq, spec, self.authority)
            maps.append(
                np.stack([
                    secure_conv.secure_convolution(
                        wl, fk, kq, self.mpk.feip_mpk, codec, self.workers
                    ).data
                    for wl in batch.features
                ])
            )
        return np.stack(maps, axis=-1)

    def label_diff(self, pred_q: QuantTensor, batch: BatchCiphertexts) -> np.ndarray:
        codec = self.bundle.codec
        keys = secure_matrix.pre_process_key_derive(
            pred_q, SUB, self.authority, enc_ref=batch.labels
        )
        label_minus_pred = secure_matrix.secure_computation(
            batch.labels, SUB, keys, pred_q,
            self.mpk.feip_mpk, self.mpk.febo_mpk, codec, self.workers,
        )
        return -label_minus_pred.data

    def label_dots(self, logp_q: QuantTensor, batch: BatchCiphertexts) -> np.ndarray:
        """Per-sample inner products <one-hot label, column of logp_q>."""
        codec = self.bundle.codec
        operand = tuple(tuple(int(v) for v in logp_q.data[:, j])
                        for j in range(logp_q.shape[1]))
        resp = self.authority.derive(KeyRequest(function=DOT, operand=operand))
        classes = logp_q.shape[0]
        mpk = self.mpk.feip_mpk
        col_mpk = mpk.prefix(classes) if mpk.eta != classes else mpk
        bound = max(operand_dot_bound(row, codec) for row in operand)
        ensure_dlog_table(col_mpk.params, bound)
        cells = [
            feip_decrypt(col_mpk, batch.labels.col_cts[j], resp.feip_keys[j],
                         list(operand[j]), bound)
            for j in range(logp_q.shape[1])
        ]
        return np.array(cells, dtype=np.int64)


class _ReferenceOps:
    """The same per-batch computations on plaintext quantized integers."""

    def __init__(
        self,
        features: np.ndarray,
        labels: Sequence[int],
        codec: FixedPointCodec,
        batch_size: int,
        num_classes: int,
        conv_spec: ConvSpec | None = None,
    ) -> None:
        self.codec = codec
        self.conv_spec = conv_spec
        onehot = one_hot(labels, num_classes)
        n = onehot.shape[1]
        self.x_batches: list[QuantTensor | list[np.ndarray]] = []
        self.y_batches: list[QuantTensor] = []
        for lo in range(0, n, batch_size):
            hi = min(lo + batch_size, n)
            if conv_spec is None:
                self.x_batches.append(quantize(features[:, lo:hi], codec))
            else:
                self.x_batches.append([
                    secure_conv.extract_windows(
                        quantize(features[s], codec).data, conv_spec
                    ).astype(np.int64)
                    for s in range(lo, hi)
                ])
            # Quantizing per batch keeps both paths slicing identically.
            self.y_batches.append(quantize(onehot[:, lo:hi], codec))

    def first_product(self, w1q: QuantTensor, batch: BatchCiphertexts) -> np.ndarray:
        spec = self.conv_spec
        xb = self.x_batches[batch.index]
        if spec is None:
            return w1q.data @ xb.data
        flat = w1q.data.reshape(-1, spec.filter_count)
        return np.stack([
            (wins @ flat).reshape(spec.out_height, spec.out_width, spec.filter_count)
            for wins in xb
        ])

    def label_diff(self, pred_q: QuantTensor, batch: BatchCiphertexts) -> np.ndarray:
        return pred_q.data - self.y_batches[batch.index].data

    def label_dots(self, logp_q: QuantTensor, batch: BatchCiphertexts) -> np.ndarray:
        yb = self.y_batches[batch.index].data
        return np.einsum("ij,ij->j", yb, logp_q.data)


def _index_batches(count: int) -> list[SimpleNamespace]:
    """Index-only stand-ins so the reference loop iterates like a bundle."""
    return [SimpleNamespace(index=i) for i in range(count)]


def _run_loop(
    layers: list[LayerSpec],
    hyper: Hyperparams,
    codec: FixedPointCodec,
    ops,
    batches: Sequence,
    batch_widths: Sequence[int],
    permitted: frozenset[str],
    secure_loss: bool,
    log_path=None,
    progress: Callable[[dict], None] | None = None,
) -> TrainRun:
    """The single training loop both the encrypted and reference paths run."""
    loss_kind = _loss_kind(layers)
    _first_weight_layer(layers)
    if DOT not in permitted or SUB not in permitted:
        raise UnsupportedFunction(
            "training needs dot-product and sub in the permitted function set"
        )
    params = init_params(layers, hyper.seed)
    run = TrainRun(layers=layers, hyper=hyper, permitted=permitted, params=params)
    log_file = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        for _ in range(hyper.epochs):
            for batch, width in zip(batches, batch_widths):
                if hyper.iters is not None and run.iteration >= hyper.iters:
                    return run
                started = time.perf_counter()
                try:
                    w1q = quantize(run.params[0].w, codec)
                    product = ops.first_product(w1q, batch)
                    z1 = dequantize(QuantTensor(product, 2), codec)
                    cache = forward(layers, run.params, first_preact=z1)
                    pred = cache.prediction
                    pred_q = quantize(pred, codec)
                    diff_int = ops.label_diff(pred_q, batch)
                    diff = dequantize(QuantTensor(diff_int, 1), codec)
                    if loss_kind == "softmax_ce":
                        delta = diff / width
                    else:
                        delta = diff * pred * (1.0 - pred) / width
                    grads = backward(layers, run.params, cache, delta)
                    run.params = sgd_update(run.params, grads, hyper)

                    label_int = pred_q.data - diff_int
                    label = dequantize(QuantTensor(label_int, 1), codec)
                    batch_acc = float(
                        np.mean(pred.argmax(axis=0) == label.argmax(axis=0))
                    )
                    if secure_loss:
                        logp = np.log(np.maximum(pred, math.exp(_MIN_LOG_PROB)))
                        dots = ops.label_dots(quantize(logp, codec), batch)
                        cost = float(-dequantize(QuantTensor(dots, 2), codec).mean())
                    elif loss_kind == "softmax_ce":
                        cost = loss_softmax_ce(pred, label)
                    else:
                        cost = loss_mse(pred, label)
                except FennError as exc:
                    raise type(exc)(f"iteration {run.iteration}: {exc}") from exc
                record = {
                    "iter": run.iteration,
                    "cost": cost,
                    "batch_acc": batch_acc,
                    "timing_ms": (time.perf_counter() - started) * 1000.0,
                }
                run.metrics.append(record)
                if log_file:
                    log_file.write(json.dumps(record) + "\n")
                if progress:
                    progress(record)
                run.iteration += 1
    finally:
        if log_file:
            log_file.close()
    return run


def _check_first_layer(layers: list[LayerSpec], bundle: ClientBundle) -> None:
    spec = _first_weight_layer(layers)
    if bundle.conv_spec is None:
        if spec.kind != "dense":
            raise ShapeMismatch("bundle holds matrix batches but the first layer is conv")
        if spec.in_dim != bundle.feature_shape[0]:
            raise ShapeMismatch(
                f"first layer expects {spec.in_dim} features, "
                f"bundle provides {bundle.feature_shape[0]}"
            )
    else:
        cs = bundle.conv_spec
        if spec.kind != "conv":
            raise ShapeMismatch("bundle holds windowed batches but the first layer is dense")
        if (
            spec.filter_size != cs.filter_size
            or spec.in_channels != cs.channels
            or spec.out_channels != cs.filter_count
            or spec.padding != cs.padding
            or spec.stride != cs.stride
        ):
            raise ShapeMismatch("first conv layer does not match the bundle's conv spec")


def train(
    bundle: ClientBundle,
    layers: list[LayerSpec],
    hyper: Hyperparams,
    authority,
    mpk: MpkBundle,
    workers: int = 1,
    secure_loss: bool = False,
    permitted: frozenset[str] = PERMITTED_ALL,
    log_path=None,
    progress: Callable[[dict], None] | None = None,
) -> TrainRun:
    """Train on an encrypted bundle, deriving keys through the authority."""
    _check_first_layer(layers, bundle)
    ops = _EncryptedOps(bundle, authority, mpk, workers)
    widths = [b.labels.shape[1] for b in bundle.batches]
    return _run_loop(
        layers, hyper, bundle.codec, ops, bundle.batches, widths,
        permitted, secure_loss, log_path, progress,
    )


def train_reference(
    features: np.ndarray,
    labels: Sequence[int],
    layers: list[LayerSpec],
    hyper: Hyperparams,
    codec: FixedPointCodec,
    num_classes: int,
    conv_spec: ConvSpec | None = None,
    secure_loss: bool = False,
    log_path=None,
    progress: Callable[[dict], None] | None = None,
) -> TrainRun:
    """The plaintext-integer twin of `train` on the same raw data."""
    ops = _ReferenceOps(features, labels, codec, hyper.batch_size, num_classes, conv_spec)
    widths = [y.shape[1] for y in ops.y_batches]
    batches = _index_batches(len(widths))
    return _run_loop(
        layers, hyper, codec, ops, batches, widths,
        PERMITTED_ALL, secure_loss, log_path, progress,
    )


def _first_preact_reference(
    layers: list[LayerSpec],
    params: Params,
    features: np.ndarray,
    codec: FixedPointCodec,
    conv_spec: ConvSpec | None,
) -> np.ndarray:
    w1q = quantize(params[0].w, codec)
    if conv_spec is None:
        xq = quantize(features, codec)
        return dequantize(QuantTensor(w1q.data @ xq.data, 2), codec)
    flat = w1q.data.reshape(-1, conv_spec.filter_count)
    maps = [
        (
            secure_conv.extract_windows(quantize(img, codec).data, conv_spec)
            .astype(np.int64) @ flat
        ).reshape(conv_spec.out_height, conv_spec.out_width, conv_spec.filter_count)
        for img in features
    ]
    return dequantize(QuantTensor(np.stack(maps), 2), codec)


def predict(
    layers: list[LayerSpec],
    params: Params,
    features: np.ndarray | None = None,
    codec: FixedPointCodec | None = None,
    conv_spec: ConvSpec | None = None,
    bundle: ClientBundle | None = None,
    authority=None,
    mpk: MpkBundle | None = None,
    workers: int = 1,
) -> np.ndarray:
    """Class ids, from plaintext features or an encrypted bundle.

    Both paths quantize the first-layer product identically, so they
    return the same ids for the same underlying data.
    """
    if (features is None) == (bundle is None):
        raise ShapeMismatch("pass exactly one of features or bundle")
    if bundle is not None:
        if authority is None or mpk is None:
            raise ShapeMismatch("encrypted prediction needs the authority and mpk bundle")
        _check_first_layer(layers, bundle)
        ops = _EncryptedOps(bundle, authority, mpk, workers)
        w1q = quantize(params[0].w, bundle.codec)
        ids = []
        for batch in bundle.batches:
            z1 = dequantize(QuantTensor(ops.first_product(w1q, batch), 2), bundle.codec)
            ids.append(forward(layers, params, first_preact=z1).prediction.argmax(axis=0))
        return np.concatenate(ids)
    if codec is None:
        raise ShapeMismatch("plaintext prediction needs the codec")
    z1 = _first_preact_reference(layers, params, features, codec, conv_spec)
    return forward(layers, params, first_preact=z1).prediction.argmax(axis=0)


def preset_mlp(
    in_dim: int = 784, hidden: int = 32, classes: int = 10
) -> tuple[list[LayerSpec], Hyperparams, None]:
    """Dense 784-32-10 sigmoid network with a sigmoid output and MSE loss.

    The first layer uses a wide random init (its weights do not train, so
    it acts as a fixed random feature map); the output layer starts at
    zero so early updates are driven by the labels alone.
    """
    layers = build_mlp(
        [in_dim, hidden, classes],
        output="sigmoid",
        first_init_scale=3.0,
        final_init_scale=0.0,
    )
    return layers, Hyperparams(lr=0.5, batch_size=64, epochs=1, seed=0), None


def preset_lenet5(classes: int = 10) -> tuple[list[LayerSpec], Hyperparams, ConvSpec]:
    """LeNet-5 on 28x28x1 images; the C1 kernels form the fixed feature map."""
    layers = build_lenet5(classes)
    spec = ConvSpec(
        height=28, width=28, channels=1,
        filter_size=5, padding=2, stride=1, filter_count=6,
    )
    return layers, Hyperparams(lr=0.5, batch_size=64, epochs=1, seed=0), spec
