"""Command-line surface: setup, encrypt, train, predict, bench, verify, serve.

Commands exchange data only through the documented file formats (IDX
images and labels, JSON key/bundle/checkpoint files, JSON-lines run
logs), so every pipeline stage can be rerun or inspected independently.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 library
error (crypto, bounds, malformed files). Every command is deterministic
under --seed; commands that omit it fall back to OS randomness for key
material and to seed 0 for data work.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import random
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np

from . import datasets, febo, feip, serialize
from .authority import Authority
from .encoding import FixedPointCodec, QuantTensor
from .errors import FennError, MalformedInput, NotInRange
from .group import group_gen
from .messages import DOT, MpkBundle
from .secure_conv import ConvSpec, extract_windows, flatten_kernel
from .secure_conv import pre_process_encryption as conv_encrypt
from .secure_conv import pre_process_key_derive as conv_key_derive
from .secure_conv import secure_convolution
from .secure_matrix import (
    pre_process_encryption,
    pre_process_key_derive,
    secure_computation,
)
from .service import HttpAuthority, create_app
from .training import (
    client_prepare,
    predict as run_predict,
    preset_lenet5,
    preset_mlp,
    train as run_train,
    train_reference,
)

MSK_FILE = "authority.msk.json"
MPK_FILE = "public.mpk.json"
BENCH_OPS = ("enc", "keyderive", "dec-add", "dec-mul", "dec-dot")
DEFAULT_ETA = 784
LENET_MAX_SAMPLES = 128


@dataclass
class CliConfig:
    """Validated knobs shared by the data-path commands."""

    lam: int = 256
    scale_digits: int = 2
    workers: int = 1
    seed: int | None = None
    preset: str = "mlp"

    def __post_init__(self):
        if self.workers < 1:
            raise click.UsageError("--workers must be at least 1")
        if self.lam < 16:
            raise click.UsageError("--lambda must be at least 16 bits")
        if self.scale_digits < 0:
            raise click.UsageError("--scale-digits must not be negative")
        if self.preset not in ("mlp", "lenet5"):
            raise click.UsageError(f"unknown preset {self.preset!r}")

    def data_rng(self) -> random.Random:
        return random.Random(self.seed if self.seed is not None else 0)

    def key_rng(self):
        return random.Random(self.seed) if self.seed is not None else None


def library_errors(fn):
    """Map FennError to exit code 3 with a one-line message."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except FennError as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            sys.exit(3)

    return wrapper


def _preset(name: str):
    return preset_mlp() if name == "mlp" else preset_lenet5()


_CSV_START = frozenset(b"0123456789+-. \t\r\n")


def _is_idx(path) -> bool:
    """Binary content is routed to the IDX reader, text to the CSV reader.

    A corrupted IDX magic still lands in read_idx, which names the bad
    bytes and their offset instead of a misleading CSV parse error.
    """
    with open(path, "rb") as fh:
        head = fh.read(1)
    return bool(head) and head[0] not in _CSV_START


def _load_features(path, conv_spec: ConvSpec | None) -> np.ndarray:
    """IDX or CSV features, as (rows, samples) dense or (n, h, w, c) images."""
    if _is_idx(path):
        images = datasets.read_idx(path)
        if images.ndim != 3:
            raise MalformedInput(f"{path}: expected an IDX image stack")
        if conv_spec is None:
            return datasets.features_from_images(images)
        return images.reshape(
            images.shape[0], images.shape[1], images.shape[2], 1
        ).astype(np.float64) / 255.0
    table = datasets.read_numeric_csv(path)
    if conv_spec is None:
        return table.T
    expect = conv_spec.height * conv_spec.width * conv_spec.channels
    if table.shape[1] != expect:
        raise MalformedInput(
            f"{path}: {table.shape[1]} columns, expected {expect} "
            f"for {conv_spec.height}x{conv_spec.width}x{conv_spec.channels} images"
        )
    return table.reshape(
        -1, conv_spec.height, conv_spec.width, conv_spec.channels
    )


def _load_labels(path) -> np.ndarray:
    if _is_idx(path):
        labels = datasets.read_idx(path)
        if labels.ndim != 1:
            raise MalformedInput(f"{path}: expected an IDX label vector")
        return labels.astype(np.int64)
    table = datasets.read_numeric_csv(path)
    flat = table.reshape(-1)
    ids = flat.astype(np.int64)
    if not np.array_equal(ids, flat):
        raise MalformedInput(f"{path}: labels must be integers")
    return ids


def _load_mpk(path) -> MpkBundle:
    return serialize.mpk_bundle_from_obj(serialize.read_json(path))


def _open_authority(msk_path, authority_url):
    """Exactly one source: a local msk file or a remote authority URL."""
    if (msk_path is None) == (authority_url is None):
        raise click.UsageError("pass exactly one of --msk or --authority")
    if msk_path is not None:
        parts = serialize.msk_file_from_obj(serialize.read_json(msk_path))
        return Authority.restore(*parts)
    return HttpAuthority(base_url=authority_url)


@click.group()
@click.version_option(version="0.1.0", prog_name="fenn")
def main():
    """Functional-encryption toolkit: keys, encrypted data, and training."""


# -- setup --------------------------------------------------------------------


@main.command()
@click.option("--lambda", "lam", type=int, default=256, show_default=True,
              help="security parameter in bits")
@click.option("--eta", type=int, default=DEFAULT_ETA, show_default=True,
              help="maximum encryptable column height")
@click.option("--out-dir", type=click.Path(file_okay=False), default=".",
              show_default=True)
@click.option("--seed", type=int, default=None,
              help="deterministic key material (testing only)")
@click.option("--force", is_flag=True, help="overwrite existing key files")
@library_errors
def setup(lam, eta, out_dir, seed, force):
    """Generate group parameters and the authority's key files."""
    CliConfig(lam=lam, seed=seed)
    if eta < 1:
        raise click.UsageError("--eta must be at least 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    msk_path, mpk_path = out / MSK_FILE, out / MPK_FILE
    existing = [p for p in (msk_path, mpk_path) if p.exists()]
    if existing and not force:
        raise click.UsageError(
            f"{existing[0]} already exists; pass --force to overwrite"
        )
    params = group_gen(lam, seed=seed)
    rng = random.Random(seed) if seed is not None else None
    authority = Authority.create(params, eta=eta, rng=rng)
    state = authority.state
    serialize.write_json(
        msk_path,
        serialize.msk_file_to_obj(params, state.feip_msk, state.febo_msk,
                                  state.permitted),
        mode=0o600,
    )
    serialize.write_json(mpk_path, serialize.mpk_bundle_to_obj(authority.mpk()))
    click.echo(f"wrote {msk_path} (0600) and {mpk_path}")
    click.echo(f"lambda={lam} eta={eta} permitted={sorted(state.permitted)}")


# -- encrypt ------------------------------------------------------------------


@main.command()
@click.option("--mpk", "mpk_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--images", "images_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="IDX image stack or numeric CSV (one sample per row)")
@click.option("--labels", "labels_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="IDX label vector or single-column CSV")
@click.option("--preset", type=click.Choice(["mlp", "lenet5"]), default="mlp",
              show_default=True, help="decides dense or windowed encryption")
@click.option("--scale-digits", type=int, default=2, show_default=True)
@click.option("--batch", "batch_size", type=int, default=64, show_default=True)
@click.option("--classes", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@library_errors
def encrypt(mpk_path, images_path, labels_path, preset, scale_digits,
            batch_size, classes, seed, out_path):
    """Quantize and encrypt a dataset into a training bundle."""
    config = CliConfig(scale_digits=scale_digits, seed=seed, preset=preset)
    if batch_size < 1:
        raise click.UsageError("--batch must be at least 1")
    mpk = _load_mpk(mpk_path)
    conv_spec = _preset(preset)[2]
    features = _load_features(images_path, conv_spec)
    labels = _load_labels(labels_path)
    if conv_spec is not None and len(labels) > LENET_MAX_SAMPLES:
        raise click.UsageError(
            f"the lenet5 preset windows every image ({conv_spec.out_height}x"
            f"{conv_spec.out_width} ciphertexts each); limit the set to "
            f"{LENET_MAX_SAMPLES} samples"
        )
    codec = FixedPointCodec(scale_digits=scale_digits)
    bundle = client_prepare(
        features, labels, mpk, codec, batch_size, classes,
        conv_spec=conv_spec, rng=config.key_rng(),
    )
    serialize.write_json(out_path, serialize.bundle_to_obj(bundle))

    feip_cts = febo_cts = 0
    for batch in bundle.batches:
        if conv_spec is None:
            feip_cts += len(batch.features.col_cts)
            febo_cts += sum(len(row) for row in batch.features.elem_cts)
        else:
            feip_cts += sum(len(w.windows) for w in batch.features)
        feip_cts += len(batch.labels.col_cts)
        febo_cts += sum(len(row) for row in batch.labels.elem_cts)
    size = Path(out_path).stat().st_size
    click.echo(
        f"wrote {out_path} ({size} bytes): {len(bundle.batches)} batches, "
        f"{bundle.sample_count} samples, {feip_cts} inner-product ciphertexts, "
        f"{febo_cts} element ciphertexts"
    )


# -- train --------------------------------------------------------------------


@main.command()
@click.option("--bundle", "bundle_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--msk", "msk_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="local authority key file")
@click.option("--authority", "authority_url", default=None,
              help="remote authority base URL (serve command)")
@click.option("--mpk", "mpk_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="public key file (default: ask the authority)")
@click.option("--preset", type=click.Choice(["mlp", "lenet5"]), default="mlp",
              show_default=True)
@click.option("--lr", type=float, default=None, help="override the preset's rate")
@click.option("--epochs", type=int, default=None)
@click.option("--iters", type=int, default=None,
              help="stop after this many iterations")
@click.option("--seed", type=int, default=None, help="parameter init seed")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--secure-loss", is_flag=True,
              help="evaluate the cost through encrypted label dots")
@click.option("--reference-check", is_flag=True,
              help="run the plaintext-quantized reference in lockstep")
@click.option("--images", "images_path", type=click.Path(exists=True),
              default=None, help="plaintext features for --reference-check")
@click.option("--labels", "labels_path", type=click.Path(exists=True),
              default=None, help="plaintext labels for --reference-check")
@click.option("--out", "checkpoint_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--log", "log_path", type=click.Path(dir_okay=False), default=None,
              help="JSON-lines metrics log")
@library_errors
def train(bundle_path, msk_path, authority_url, mpk_path, preset, lr, epochs,
          iters, seed, workers, secure_loss, reference_check, images_path,
          labels_path, checkpoint_path, log_path):
    """Train on an encrypted bundle; optionally verify against the reference."""
    config = CliConfig(workers=workers, seed=seed, preset=preset)
    authority = _open_authority(msk_path, authority_url)
    mpk = _load_mpk(mpk_path) if mpk_path else authority.mpk()
    bundle = serialize.bundle_from_obj(
        serialize.read_json(bundle_path), mpk.params
    )
    layers, hyper, conv_spec = _preset(preset)
    overrides = {"batch_size": bundle.label_shape[1]}
    if lr is not None:
        overrides["lr"] = lr
    if epochs is not None:
        overrides["epochs"] = epochs
    if iters is not None:
        overrides["iters"] = iters
    if seed is not None:
        overrides["seed"] = seed
    hyper = dataclasses.replace(hyper, **overrides)

    def progress(record):
        click.echo(
            f"iter {record['iter']}: cost {record['cost']:.4f} "
            f"batch_acc {record['batch_acc']:.3f} "
            f"({record['timing_ms']:.0f} ms)",
            err=True,
        )

    run = run_train(
        bundle, layers, hyper, authority, mpk,
        workers=config.workers, secure_loss=secure_loss,
        log_path=log_path, progress=progress,
    )
    serialize.write_json(
        checkpoint_path, serialize.checkpoint_to_obj(layers, run.params, hyper)
    )
    click.echo(
        f"wrote {checkpoint_path}: {run.iteration} iterations, "
        f"final cost {run.metrics[-1]['cost']:.4f}"
        if run.metrics else f"wrote {checkpoint_path}: 0 iterations"
    )

    if not reference_check:
        return
    if images_path is None or labels_path is None:
        raise click.UsageError(
            "--reference-check needs --images and --labels (the plaintext data)"
        )
    features = _load_features(images_path, conv_spec)
    labels = _load_labels(labels_path)
    ref = train_reference(
        features, labels, layers, hyper, bundle.codec,
        num_classes=bundle.label_shape[0], conv_spec=conv_spec,
        secure_loss=secure_loss,
    )
    mismatch = None
    for i, (p, q) in enumerate(zip(run.params, ref.params)):
        if p is None or q is None:
            if p is not q:
                mismatch = f"layer {i} parameter presence differs"
            continue
        if not (np.array_equal(p.w, q.w) and np.array_equal(p.b, q.b)):
            mismatch = f"layer {i} parameters differ"
            break
    def strip(metrics):
        return [{k: v for k, v in m.items() if k != "timing_ms"} for m in metrics]

    if mismatch is None and strip(run.metrics) != strip(ref.metrics):
        mismatch = "metrics logs differ"
    if mismatch:
        click.echo(f"REFERENCE MISMATCH: {mismatch}", err=True)
        sys.exit(1)
    click.echo(
        f"EXACT MATCH: encrypted and reference runs agree over "
        f"{run.iteration} iterations"
    )


# -- predict ------------------------------------------------------------------


@main.command()
@click.option("--checkpoint", "checkpoint_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--images", "images_path", type=click.Path(exists=True),
              default=None, help="plaintext features (IDX or CSV)")
@click.option("--bundle", "bundle_path", type=click.Path(exists=True),
              default=None, help="encrypted bundle instead of plaintext")
@click.option("--msk", "msk_path", type=click.Path(exists=True), default=None)
@click.option("--authority", "authority_url", default=None)
@click.option("--mpk", "mpk_path", type=click.Path(exists=True), default=None)
@click.option("--scale-digits", type=int, default=2, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="write ids one per line (default: stdout)")
@library_errors
def predict(checkpoint_path, images_path, bundle_path, msk_path, authority_url,
            mpk_path, scale_digits, workers, out_path):
    """Predict class ids from a checkpoint, on plaintext or encrypted data."""
    config = CliConfig(scale_digits=scale_digits, workers=workers)
    if (images_path is None) == (bundle_path is None):
        raise click.UsageError("pass exactly one of --images or --bundle")
    layers, params, _ = serialize.checkpoint_from_obj(
        serialize.read_json(checkpoint_path)
    )
    if bundle_path is not None:
        authority = _open_authority(msk_path, authority_url)
        mpk = _load_mpk(mpk_path) if mpk_path else authority.mpk()
        bundle = serialize.bundle_from_obj(
            serialize.read_json(bundle_path), mpk.params
        )
        ids = run_predict(
            layers, params, bundle=bundle, authority=authority, mpk=mpk,
            workers=config.workers,
        )
    else:
        codec = FixedPointCodec(scale_digits=scale_digits)
        spec = layers[0]
        conv_spec = None
        if spec.kind == "conv":
            images = datasets.read_idx(images_path) if _is_idx(images_path) else None
            if images is None:
                raise click.UsageError(
                    "convolutional prediction needs IDX images"
                )
            conv_spec = ConvSpec(
                height=images.shape[1], width=images.shape[2],
                channels=spec.in_channels, filter_size=spec.filter_size,
                padding=spec.padding, stride=spec.stride,
                filter_count=spec.out_channels,
            )
        features = _load_features(images_path, conv_spec)
        ids = run_predict(layers, params, features=features, codec=codec,
                          conv_spec=conv_spec)
    text = "\n".join(str(int(i)) for i in ids) + "\n"
    if out_path:
        Path(out_path).write_text(text)
        click.echo(f"wrote {out_path}: {len(ids)} predictions")
    else:
        click.echo(text, nl=False)


# -- bench --------------------------------------------------------------------


def _bench_once(op, size, workers, authority, codec, rng):
    """One timed measurement; returns milliseconds."""
    params = authority.state.params
    mpk = authority.state.feip_mpk
    febo_mpk = authority.state.febo_mpk
    if op == "enc":
        x = [rng.randrange(-100, 101) for _ in range(size)]
        t0 = time.perf_counter()
        feip.encrypt(mpk.prefix(size), x, rng)
        return (time.perf_counter() - t0) * 1000.0
    if op == "keyderive":
        y = [rng.randrange(-100, 101) for _ in range(size)]
        t0 = time.perf_counter()
        authority.feip_key(y)
        return (time.perf_counter() - t0) * 1000.0
    if op in ("dec-add", "dec-mul"):
        f = op.split("-")[1]
        x = np.array([[rng.randrange(-100, 101) for _ in range(size)]],
                     dtype=np.int64)
        y = np.array([[rng.randrange(1, 101) for _ in range(size)]],
                     dtype=np.int64)
        enc = pre_process_encryption(
            QuantTensor(x, 1), mpk, febo_mpk, rng
        )
        keys = pre_process_key_derive(QuantTensor(y, 1), f, authority, enc_ref=enc)
        t0 = time.perf_counter()
        secure_computation(enc, f, keys, QuantTensor(y, 1), mpk, febo_mpk,
                           codec, workers=workers)
        return (time.perf_counter() - t0) * 1000.0
    # dec-dot: a k x m output grid with about `size` cells
    m = max(1, int(round(size ** 0.5)))
    k = max(1, (size + m - 1) // m)
    eta = 8
    x = np.array([[rng.randrange(-20, 21) for _ in range(m)] for _ in range(eta)],
                 dtype=np.int64)
    y = np.array([[rng.randrange(-20, 21) for _ in range(eta)] for _ in range(k)],
                 dtype=np.int64)
    enc = pre_process_encryption(QuantTensor(x, 1), mpk, febo_mpk, rng,
                                 include_elementwise=False)
    keys = pre_process_key_derive(QuantTensor(y, 1), DOT, authority, enc_ref=enc)
    t0 = time.perf_counter()
    secure_computation(enc, DOT, keys, QuantTensor(y, 1), mpk, febo_mpk,
                       codec, workers=workers)
    return (time.perf_counter() - t0) * 1000.0


@main.command()
@click.option("--op", "ops", multiple=True, type=click.Choice(BENCH_OPS),
              help="operation to time (repeatable; default: all)")
@click.option("--sizes", default="100,500,1000,1500,2000", show_default=True,
              help="comma-separated element counts")
@click.option("--workers", "workers_list", default="1", show_default=True,
              help="comma-separated worker counts (decrypt ops only)")
@click.option("--lambda", "lam", type=int, default=256, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="CSV path (default: stdout)")
@library_errors
def bench(ops, sizes, workers_list, lam, seed, out_path):
    """Time crypto operations into a CSV of (op, size, workers, ms)."""
    config = CliConfig(lam=lam, seed=seed)
    ops = ops or BENCH_OPS
    try:
        size_values = [int(s) for s in sizes.split(",") if s.strip() != ""]
        worker_values = [int(w) for w in workers_list.split(",") if w.strip() != ""]
    except ValueError:
        raise click.UsageError("--sizes and --workers take comma-separated integers")
    if any(w < 1 for w in worker_values):
        raise click.UsageError("--workers entries must be at least 1")
    size_values = [s for s in size_values if s > 0]

    rows = []
    if size_values:
        rng = config.data_rng()
        params = group_gen(lam, seed=seed)
        authority = Authority.create(params, eta=max(max(size_values), 8),
                                     rng=random.Random(seed))
        codec = FixedPointCodec(scale_digits=2, value_bound=10**5)
        for op in ops:
            decrypt_op = op.startswith("dec-")
            for size in size_values:
                for workers in (worker_values if decrypt_op else [1]):
                    ms = _bench_once(op, size, workers, authority, codec, rng)
                    rows.append((op, size, workers, round(ms, 3)))

    target = open(out_path, "w", newline="", encoding="utf-8") if out_path \
        else sys.stdout
    try:
        writer = csv.writer(target)
        writer.writerow(["op", "size", "workers", "ms"])
        writer.writerows(rows)
    finally:
        if out_path:
            target.close()
            click.echo(f"wrote {out_path}: {len(rows)} measurements", err=True)


# -- verify -------------------------------------------------------------------


def _tamper(ct: feip.FeipCiphertext) -> feip.FeipCiphertext:
    """Flip the lowest bit of the first ciphertext element."""
    from .group import GroupElement

    flipped = GroupElement(int(ct.ct[0].value) ^ 1, ct.ct[0].params)
    return feip.FeipCiphertext(ct.ct0, (flipped,) + ct.ct[1:])


def _verify_feip(params, trials, rng, inject_fault):
    failures = 0
    mpk_full, msk_full = feip.setup(params, 16, rng)
    fault_seen = False
    for t in range(trials):
        eta = rng.randrange(1, 17)
        x = [rng.randrange(-100, 101) for _ in range(eta)]
        y = [rng.randrange(-100, 101) for _ in range(eta)]
        ct = feip.encrypt(mpk_full.prefix(eta), x, rng)
        if inject_fault and t == 0:
            ct = _tamper(ct)
        fk = feip.key_derive(msk_full.prefix(eta), y, params)
        bound = sum(abs(a * b) for a, b in zip(x, y)) + 1
        try:
            got = feip.decrypt(mpk_full.prefix(eta), ct, fk, y, bound)
            ok = got == sum(a * b for a, b in zip(x, y))
        except NotInRange:
            ok = False
        if not ok:
            failures += 1
            if inject_fault and t == 0:
                fault_seen = True
    return failures, fault_seen


def _verify_febo(params, trials, rng):
    failures = 0
    mpk, msk = febo.setup(params, rng)
    for op in ("add", "sub", "mul"):
        for _ in range(trials):
            x = rng.randrange(-10**4, 10**4 + 1)
            y = rng.randrange(-10**4, 10**4 + 1)
            ct = febo.encrypt(mpk, x, rng)
            fk = febo.key_derive(msk, ct.cmt, op, y, params)
            want = {"add": x + y, "sub": x - y, "mul": x * y}[op]
            bound = abs(want) + 10
            if febo.decrypt(mpk, fk, ct, op, y, bound) != want:
                failures += 1
    for _ in range(trials):
        q = rng.randrange(-100, 101)
        y = rng.randrange(1, 101)
        ct = febo.encrypt(mpk, q * y, rng)
        fk = febo.key_derive(msk, ct.cmt, "div", y, params)
        if febo.decrypt(mpk, fk, ct, "div", y, abs(q) + 10) != q:
            failures += 1
    return failures


def _verify_matrix(params, trials, rng):
    failures = 0
    authority = Authority.create(params, eta=6, rng=rng)
    mpk = authority.state.feip_mpk
    febo_mpk = authority.state.febo_mpk
    codec = FixedPointCodec(scale_digits=0, value_bound=60)
    for t in range(trials):
        f = ("dot-product", "add", "sub", "mul")[t % 4]
        n, m = rng.randrange(1, 6), rng.randrange(1, 6)
        x = np.array([[rng.randrange(-50, 51) for _ in range(m)]
                      for _ in range(n)], dtype=np.int64)
        if f == "dot-product":
            k = rng.randrange(1, 4)
            y = np.array([[rng.randrange(-50, 51) for _ in range(n)]
                          for _ in range(k)], dtype=np.int64)
            want = y @ x
        else:
            y = np.array([[rng.randrange(1, 51) for _ in range(m)]
                          for _ in range(n)], dtype=np.int64)
            want = {"add": x + y, "sub": x - y, "mul": x * y}[f]
        enc = pre_process_encryption(QuantTensor(x, 1), mpk, febo_mpk, rng)
        keys = pre_process_key_derive(QuantTensor(y, 1), f, authority, enc_ref=enc)
        got = secure_computation(enc, f, keys, QuantTensor(y, 1), mpk, febo_mpk,
                                 codec)
        if not np.array_equal(got.data, want):
            failures += 1
    return failures


def _verify_conv(params, trials, rng):
    failures = 0
    authority = Authority.create(params, eta=3 * 3 * 2, rng=rng)
    mpk = authority.state.feip_mpk
    codec = FixedPointCodec(scale_digits=0, value_bound=40)
    done = 0
    while done < trials:
        try:
            spec = ConvSpec(
                height=rng.randrange(3, 7), width=rng.randrange(3, 7),
                channels=rng.randrange(1, 3), filter_size=rng.randrange(2, 4),
                padding=rng.randrange(0, 2), stride=rng.randrange(1, 3),
            )
        except FennError:
            continue  # stride does not divide this geometry; redraw
        done += 1
        img = np.array(
            [[[rng.randrange(0, 30) for _ in range(spec.channels)]
              for _ in range(spec.width)] for _ in range(spec.height)],
            dtype=np.int64,
        )
        kernel = np.array(
            [[[rng.randrange(-5, 6) for _ in range(spec.channels)]
              for _ in range(spec.filter_size)]
             for _ in range(spec.filter_size)],
            dtype=np.int64,
        )
        enc = conv_encrypt(QuantTensor(img, 1), spec, mpk, rng)
        keys = conv_key_derive(QuantTensor(kernel, 1), spec, authority)
        got = secure_convolution(enc, keys, QuantTensor(kernel, 1), mpk, codec)
        want = (
            extract_windows(img, spec) @ np.array(flatten_kernel(kernel, spec))
        ).reshape(spec.out_height, spec.out_width)
        if not np.array_equal(got.data.reshape(want.shape), want):
            failures += 1
    return failures


@main.command()
@click.option("--trials", type=int, default=25, show_default=True)
@click.option("--lambda", "lam", type=int, default=64, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--inject-fault", is_flag=True,
              help="flip one ciphertext bit; the run must detect it and fail")
@library_errors
def verify(trials, lam, seed, inject_fault):
    """Run the oracle-equivalence suites and report per-suite counts."""
    config = CliConfig(lam=lam, seed=seed)
    if trials < 1:
        raise click.UsageError("--trials must be at least 1")
    rng = config.data_rng()
    params = group_gen(lam, seed=seed)

    feip_failures, fault_seen = _verify_feip(params, trials, rng, inject_fault)
    results = [
        ("feip", feip_failures, trials),
        ("febo", _verify_febo(params, trials, rng), 4 * trials),
        ("secure_matrix", _verify_matrix(params, trials, rng), trials),
        ("secure_conv", _verify_conv(params, trials, rng), trials),
    ]
    total_failures = 0
    for name, failures, count in results:
        click.echo(f"{name}: {count - failures}/{count} ok")
        total_failures += failures
    if inject_fault:
        if fault_seen:
            click.echo("injected fault detected: tampered ciphertext failed "
                       "to decrypt correctly")
        else:
            click.echo("injected fault NOT detected", err=True)
    if total_failures:
        click.echo(f"FAIL: {total_failures} mismatches", err=True)
        sys.exit(1)
    click.echo("PASS")


# -- serve and make-dataset ---------------------------------------------------


@main.command()
@click.option("--msk", "msk_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8571, show_default=True)
@library_errors
def serve(msk_path, host, port):
    """Serve the authority's key-derivation API over HTTP."""
    import uvicorn

    authority = Authority.restore(
        *serialize.msk_file_from_obj(serialize.read_json(msk_path))
    )
    app = create_app(authority)
    click.echo(f"authority listening on http://{host}:{port}", err=True)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command("make-dataset")
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--train", "train_count", type=int, default=500, show_default=True)
@click.option("--test", "test_count", type=int, default=200, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@library_errors
def make_dataset(out_dir, train_count, test_count, seed):
    """Write the bundled digit corpus as IDX files (28x28, upscaled)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_x, train_y, test_x, test_y = datasets.canonical_split(
        train_count, test_count, seed=seed
    )
    names = ("train-images.idx", "train-labels.idx",
             "test-images.idx", "test-labels.idx")
    arrays = (train_x, train_y.astype(np.uint8),
              test_x, test_y.astype(np.uint8))
    for name, arr in zip(names, arrays):
        datasets.write_idx(out / name, arr)
    click.echo(
        f"wrote {', '.join(names)} to {out} "
        f"({train_count} train, {test_count} test)"
    )


if __name__ == "__main__":
    main()
