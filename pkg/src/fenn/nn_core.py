"""Plaintext neural-network engine: layers, losses, gradients, SGD.

Dense layers operate column-major, (features x batch), computing z = W a + b.
Convolution and pooling operate on (batch, H, W, C) stacks; a flatten layer
converts between the two. Activation layers (sigmoid, softmax) are separate
specs so the training loop can fold the output activation into the loss
gradient: softmax with cross-entropy backpropagates exactly P - Y, sigmoid
with squared error (A - Y) * A * (1 - A).

forward() can optionally start from an externally supplied first-layer
pre-activation (without bias). That is the hook the encrypted training path
uses: the first layer's product arrives from a secure computation instead of
a plaintext matmul, the engine adds the bias and proceeds normally. In that
mode the first layer's input is unknown, so backward() reports None for its
weight gradient (its bias gradient never needs the input) and sgd_update()
leaves the corresponding weights untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeMismatch


@dataclass(frozen=True)
class LayerSpec:
    """One layer: kind in {dense, conv, avgpool, sigmoid, softmax, flatten}.

    dense uses in_dim/out_dim; conv uses filter_size/in_channels/out_channels/
    padding/stride; avgpool uses pool. init_scale overrides the default
    1/sqrt(fan_in) weight-init scale for dense and conv layers.
    """

    kind: str
    in_dim: int = 0
    out_dim: int = 0
    filter_size: int = 0
    in_channels: int = 0
    out_channels: int = 0
    padding: int = 0
    stride: int = 1
    pool: int = 0
    init_scale: float | None = None


@dataclass
class LayerParams:
    w: np.ndarray
    b: np.ndarray


Params = list  # LayerParams | None per layer


@dataclass(frozen=True)
class Hyperparams:
    lr: float = 0.1
    batch_size: int = 64
    epochs: int = 1
    iters: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must not be negative")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")


@dataclass
class ForwardCache:
    """Per-layer inputs/outputs retained for backprop. inputs[0] is None when
    the first pre-activation came from a secure computation."""

    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    cols: dict = field(default_factory=dict)  # conv layer index -> im2col matrix

    @property
    def prediction(self) -> np.ndarray:
        return self.outputs[-1]


def init_params(layers: list[LayerSpec], seed: int = 0) -> Params:
    """Uniform [-0.5, 0.5] weights scaled by init_scale or 1/sqrt(fan_in); zero biases."""
    rng = np.random.default_rng(seed)
    params: Params = []
    for spec in layers:
        if spec.kind == "dense":
            scale = spec.init_scale if spec.init_scale is not None else 1.0 / np.sqrt(spec.in_dim)
            w = rng.uniform(-0.5, 0.5, (spec.out_dim, spec.in_dim)) * scale
            b = np.zeros((spec.out_dim, 1))
            params.append(LayerParams(w, b))
        elif spec.kind == "conv":
            fan_in = spec.filter_size**2 * spec.in_channels
            scale = spec.init_scale if spec.init_scale is not None else 1.0 / np.sqrt(fan_in)
            w = rng.uniform(
                -0.5, 0.5, (spec.filter_size, spec.filter_size, spec.in_channels, spec.out_channels)
            ) * scale
            b = np.zeros(spec.out_channels)
            params.append(LayerParams(w, b))
        else:
            params.append(None)
    return params


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=0, keepdims=True))
    return e / e.sum(axis=0, keepdims=True)


def _im2col(x: np.ndarray, spec: LayerSpec) -> tuple[np.ndarray, int, int]:
    """(batch * out_h * out_w, f*f*C) window matrix for a conv layer."""
    b, h, w, _ = x.shape
    f, pd, st = spec.filter_size, spec.padding, spec.stride
    oh = (h + 2 * pd - f) // st + 1
    ow = (w + 2 * pd - f) // st + 1
    padded = np.pad(x, ((0, 0), (pd, pd), (pd, pd), (0, 0)))
    cols = np.empty((b, oh, ow, f * f * spec.in_channels))
    for oy in range(oh):
        for ox in range(ow):
            patch = padded[:, oy * st : oy * st + f, ox * st : ox * st + f, :]
            cols[:, oy, ox, :] = patch.reshape(b, -1)
    return cols.reshape(b * oh * ow, -1), oh, ow


def _col2im(cols: np.ndarray, x_shape: tuple, spec: LayerSpec) -> np.ndarray:
    """Scatter-add window gradients back to input positions (transpose of _im2col)."""
    b, h, w, c = x_shape
    f, pd, st = spec.filter_size, spec.padding, spec.stride
    oh = (h + 2 * pd - f) // st + 1
    ow = (w + 2 * pd - f) // st + 1
    padded = np.zeros((b, h + 2 * pd, w + 2 * pd, c))
    cols = cols.reshape(b, oh, ow, f, f, c)
    for oy in range(oh):
        for ox in range(ow):
            padded[:, oy * st : oy * st + f, ox * st : ox * st + f, :] += cols[:, oy, ox]
    if pd == 0:
        return padded
    return padded[:, pd:-pd, pd:-pd, :]


def forward(
    layers: list[LayerSpec],
    params: Params,
    a0: np.ndarray | None = None,
    first_preact: np.ndarray | None = None,
) -> ForwardCache:
    """Run the network, caching per-layer inputs and outputs.

    Either a0 (the input) or first_preact (the first dense/conv layer's W @ X
    without bias, e.g. a dequantized secure computation result) must be given.
    """
    if (a0 is None) == (first_preact is None):
        raise ShapeMismatch("pass exactly one of a0 or first_preact")
    cache = ForwardCache()
    start = 0
    if first_preact is not None:
        spec = layers[0]
        if spec.kind == "dense":
            cur = first_preact + params[0].b
        elif spec.kind == "conv":
            cur = first_preact + params[0].b
        else:
            raise ShapeMismatch("first layer must be dense or conv to inject a pre-activation")
        cache.inputs.append(None)
        cache.outputs.append(cur)
        start = 1
    else:
        cur = a0
    for idx in range(start, len(layers)):
        spec = layers[idx]
        cache.inputs.append(cur)
        if spec.kind == "dense":
            if cur.shape[0] != spec.in_dim:
                raise ShapeMismatch(
                    f"layer {idx}: expected {spec.in_dim} features, got {cur.shape[0]}"
                )
            cur = params[idx].w @ cur + params[idx].b
        elif spec.kind == "conv":
            cols, oh, ow = _im2col(cur, spec)
            cache.cols[idx] = cols
            wmat = params[idx].w.reshape(-1, spec.out_channels)
            out = cols @ wmat + params[idx].b
            cur = out.reshape(cur.shape[0], oh, ow, spec.out_channels)
        elif spec.kind == "avgpool":
            b, h, w, c = cur.shape
            k = spec.pool
            if h % k or w % k:
                raise ShapeMismatch(f"pool {k} does not divide {h}x{w}")
            cur = cur.reshape(b, h // k, k, w // k, k, c).mean(axis=(2, 4))
        elif spec.kind == "flatten":
            cur = cur.reshape(cur.shape[0], -1).T
        elif spec.kind == "sigmoid":
            cur = _sigmoid(cur)
        elif spec.kind == "softmax":
            cur = _softmax(cur)
        else:
            raise ShapeMismatch(f"unknown layer kind {spec.kind!r}")
        cache.outputs.append(cur)
    return cache


def loss_mse(pred: np.ndarray, label: np.ndarray) -> float:
    """Half squared error, averaged over the batch (columns)."""
    if pred.shape != label.shape:
        raise ShapeMismatch(f"prediction {pred.shape} != label {label.shape}")
    return float(0.5 * np.sum((pred - label) ** 2) / pred.shape[1])


def loss_softmax_ce(p: np.ndarray, y: np.ndarray) -> float:
    """Cross entropy -sum(y log p), averaged over the batch; y is one-hot."""
    if p.shape != y.shape:
        raise ShapeMismatch(f"probabilities {p.shape} != labels {y.shape}")
    if np.any(np.abs(p.sum(axis=0) - 1.0) > 1e-9):
        raise ValueError("probability columns must sum to 1")
    true_p = p[y.astype(bool)]
    if np.any(true_p <= 0):
        raise DomainError("zero probability at a true class")
    return float(-np.log(true_p).sum() / p.shape[1])


def output_delta(loss_kind: str, pred: np.ndarray, label: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the final dense pre-activation, output activation folded in.

    softmax_ce: (P - Y) / batch. sigmoid_mse: (A - Y) * A * (1 - A) / batch.
    """
    m = pred.shape[1]
    diff = (pred - label) / m
    if loss_kind == "softmax_ce":
        return diff
    if loss_kind == "sigmoid_mse":
        return diff * pred * (1.0 - pred)
    raise ValueError(f"unknown loss {loss_kind!r}")


def backward(
    layers: list[LayerSpec],
    params: Params,
    cache: ForwardCache,
    dz_last: np.ndarray,
) -> list:
    """Gradients per layer, given the folded output delta dz_last.

    The final layer must be the output activation (softmax or sigmoid); its
    gradient is already folded into dz_last, so the walk starts below it.
    Returns a list congruent to params; entries are LayerParams of gradients
    (w set to None when the layer input was unavailable) or None.
    """
    if layers[-1].kind not in ("softmax", "sigmoid"):
        raise ShapeMismatch("network must end in an output activation layer")
    grads: list = [None] * len(layers)
    g = dz_last
    for idx in range(len(layers) - 2, -1, -1):
        spec = layers[idx]
        a_in = cache.inputs[idx]
        if spec.kind == "dense":
            db = g.sum(axis=1, keepdims=True)
            dw = None if a_in is None else g @ a_in.T
            grads[idx] = LayerParams(dw, db)
            if idx == 0:
                break
            g = params[idx].w.T @ g
        elif spec.kind == "conv":
            b, oh, ow, oc = g.shape
            gmat = g.reshape(-1, oc)
            db = gmat.sum(axis=0)
            if a_in is None:
                grads[idx] = LayerParams(None, db)
                break
            cols = cache.cols[idx]
            dw = (cols.T @ gmat).reshape(params[idx].w.shape)
            grads[idx] = LayerParams(dw, db)
            if idx == 0:
                break
            dcols = gmat @ params[idx].w.reshape(-1, oc).T
            g = _col2im(dcols, a_in.shape, spec)
        elif spec.kind == "avgpool":
            k = spec.pool
            g = np.repeat(np.repeat(g, k, axis=1), k, axis=2) / (k * k)
        elif spec.kind == "flatten":
            g = g.T.reshape(a_in.shape)
        elif spec.kind == "sigmoid":
            a = cache.outputs[idx]
            g = g * a * (1.0 - a)
        else:
            raise ShapeMismatch(f"cannot backpropagate through {spec.kind!r}")
    return grads


def sgd_update(params: Params, grads: list, hyper: Hyperparams) -> Params:
    """W <- W - lr * dW (and likewise b); None gradients leave values untouched."""
    out: Params = []
    for lp, lg in zip(params, grads):
        if lp is None:
            out.append(None)
            continue
        if lg is None:
            out.append(LayerParams(lp.w.copy(), lp.b.copy()))
            continue
        w = lp.w.copy() if lg.w is None else lp.w - hyper.lr * lg.w
        b = lp.b - hyper.lr * lg.b.reshape(lp.b.shape)
        out.append(LayerParams(w, b))
    return out


def build_mlp(
    widths: list[int],
    output: str = "softmax",
    first_init_scale: float | None = None,
    final_init_scale: float | None = None,
) -> list[LayerSpec]:
    """Dense + sigmoid stacks ending in a softmax (or sigmoid) output layer.

    first_init_scale/final_init_scale override the default 1/sqrt(fan_in)
    weight init for the first and last dense layers (0.0 gives zero weights,
    which makes the initial output distribution uniform).
    """
    if len(widths) < 2:
        raise ValueError("an MLP needs at least input and output widths")
    layers: list[LayerSpec] = []
    for i in range(len(widths) - 1):
        if i == 0:
            scale = first_init_scale
        elif i == len(widths) - 2:
            scale = final_init_scale
        else:
            scale = None
        layers.append(
            LayerSpec(kind="dense", in_dim=widths[i], out_dim=widths[i + 1], init_scale=scale)
        )
        is_last = i == len(widths) - 2
        layers.append(LayerSpec(kind="softmax" if output == "softmax" else "sigmoid")
                      if is_last else LayerSpec(kind="sigmoid"))
    return layers


def build_lenet5(num_classes: int = 10) -> list[LayerSpec]:
    """C1(6 @ 5x5, pad 2) - S2 - C3(16 @ 5x5) - S4 - C5(120) - dense(84) - softmax."""
    return [
        LayerSpec(kind="conv", filter_size=5, in_channels=1, out_channels=6, padding=2),
        LayerSpec(kind="sigmoid"),
        LayerSpec(kind="avgpool", pool=2),
        LayerSpec(kind="conv", filter_size=5, in_channels=6, out_channels=16),
        LayerSpec(kind="sigmoid"),
        LayerSpec(kind="avgpool", pool=2),
        LayerSpec(kind="flatten"),
        LayerSpec(kind="dense", in_dim=400, out_dim=120),
        LayerSpec(kind="sigmoid"),
        LayerSpec(kind="dense", in_dim=120, out_dim=84),
        LayerSpec(kind="sigmoid"),
        LayerSpec(kind="dense", in_dim=84, out_dim=num_classes),
        LayerSpec(kind="softmax"),
    ]


def predict_classes(layers: list[LayerSpec], params: Params, a0: np.ndarray) -> np.ndarray:
    """Class ids by argmax of the network output."""
    return np.argmax(forward(layers, params, a0).prediction, axis=0)
