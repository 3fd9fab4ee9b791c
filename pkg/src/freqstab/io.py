"""Dataset ingestion and model persistence.

Model file layout (all text lines are ASCII, LF terminated)::

    SCNL1
    input channels=1 height=16 width=16
    conv out_channels=16 kernel_h=5 kernel_w=5 stride=1
    relu
    ...
    loss softmax_cross_entropy
    num_classes 3
    DATA
    <float32 little-endian payload: per layer weights then bias, row-major>
"""
import os
from pathlib import Path

import numpy as np

from .convnet import Dataset, LayerSpec, Model
from .tensor import Rng

MODEL_MAGIC = b"SCNL1\n"
CIFAR_RECORD = 1 + 3 * 32 * 32
SYNTH_CLASSES = ("square", "cross", "circle")


class FormatError(ValueError):
    pass


def load_cifar10(path):
    """Parse one CIFAR-10 binary batch file into a :class:`Dataset`."""
    path = Path(path)
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size % CIFAR_RECORD:
        raise FormatError(f"{path}: size {raw.size} is not a multiple of {CIFAR_RECORD}")
    recs = raw.reshape(-1, CIFAR_RECORD)
    labels = recs[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        raise FormatError(f"{path}: record {bad[0]} has label {labels[bad[0]]} > 9")
    images = recs[:, 1:].reshape(-1, 3, 32, 32).astype(np.float64)
    return Dataset(images, labels, num_classes=10)


def load_cifar10_dir(path, split="train"):
    """Concatenate ``data_batch_*.bin`` (train) or ``test_batch.bin`` (test)."""
    path = Path(path)
    pattern = "data_batch_*.bin" if split == "train" else "test_batch.bin"
    files = sorted(path.glob(pattern))
    if not files:
        raise FileNotFoundError(f"no {pattern} under {path}")
    parts = [load_cifar10(f) for f in files]
    return Dataset(np.concatenate([p.images for p in parts]),
                   np.concatenate([p.labels for p in parts]), num_classes=10)


def _shape_mask(kind, size, cy, cx, radius, half_width):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    if kind == "square":
        return np.abs(np.maximum(np.abs(dx), np.abs(dy)) - radius) <= half_width
    if kind == "circle":
        return np.abs(np.hypot(dx, dy) - radius) <= half_width
    if kind == "cross":
        return (((np.abs(dx) <= half_width) & (np.abs(dy) <= radius))
                | ((np.abs(dy) <= half_width) & (np.abs(dx) <= radius)))
    raise ValueError(f"unknown synthetic class {kind!r}")


def synth_dataset(n_per_class, classes=SYNTH_CLASSES, size=16, rng=None,
                  background=128.0, contrast=56.0, noise_sigma=2.0, half_width=1.25):
    """Grayscale outline shapes at random position and scale.

    Images are ordered class-interleaved (0, 1, 2, 0, 1, 2, ...).
    """
    if size < 8:
        raise ValueError(f"size must be >= 8, got {size}")
    rng = Rng(0) if rng is None else rng
    k = len(classes)
    n = n_per_class * k
    images = np.empty((n, 1, size, size))
    labels = np.tile(np.arange(k), n_per_class)
    r_lo, r_hi = 0.2 * size, 0.38 * size
    for i in range(n):
        u = rng.uniform(3)
        radius = r_lo + (r_hi - r_lo) * u[0]
        lo, hi = radius + 1.0, size - 2.0 - radius
        cy = lo + (hi - lo) * u[1]
        cx = lo + (hi - lo) * u[2]
        mask = _shape_mask(classes[labels[i]], size, cy, cx, radius, half_width)
        img = background + contrast * mask + noise_sigma * rng.normal(size * size).reshape(size, size)
        images[i, 0] = np.clip(img, 0.0, 255.0)
    return Dataset(images, labels, num_classes=k)


def save_dataset(data, path):
    np.savez(path, images=data.images, labels=data.labels, num_classes=data.num_classes)


def load_dataset(path):
    with np.load(path) as z:
        return Dataset(z["images"], z["labels"], int(z["num_classes"]))


def _header_lines(model):
    c, h, w = model.input_shape
    lines = [f"input channels={c} height={h} width={w}"]
    for spec in model.layers:
        fields = " ".join(f"{k}={v}" for k, v in spec.header_fields().items())
        lines.append(f"{spec.kind} {fields}".rstrip())
    lines.append(f"loss {model.loss_kind}")
    lines.append(f"num_classes {model.num_classes}")
    lines.append("DATA")
    return lines


def save_model(path, model):
    payload = np.concatenate([p.ravel() for p in model.params]).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(("\n".join(_header_lines(model)) + "\n").encode("ascii"))
        fh.write(payload.tobytes())


def _parse_kv(tokens, lineno):
    out = {}
    for t in tokens:
        key, sep, value = t.partition("=")
        if not sep:
            raise FormatError(f"header line {lineno}: malformed field {t!r}")
        out[key] = int(value)
    return out


def load_model(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(MODEL_MAGIC):
        raise FormatError(f"{path}: bad magic (expected {MODEL_MAGIC!r})")
    pos = len(MODEL_MAGIC)
    layers, input_shape, loss_kind, num_classes = [], None, None, None
    lineno = 1
    while True:
        end = blob.find(b"\n", pos)
        if end < 0:
            raise FormatError(f"{path}: header not terminated by DATA")
        line = blob[pos:end].decode("ascii").strip()
        pos = end + 1
        lineno += 1
        if line == "DATA":
            break
        kind, *rest = line.split()
        if kind == "input":
            kv = _parse_kv(rest, lineno)
            input_shape = (kv["channels"], kv["height"], kv["width"])
        elif kind == "loss":
            loss_kind = rest[0]
        elif kind == "num_classes":
            num_classes = int(rest[0])
        else:
            try:
                layers.append(LayerSpec(kind, **_parse_kv(rest, lineno)))
            except TypeError as e:
                raise FormatError(f"header line {lineno}: {e}") from None
    if input_shape is None or loss_kind is None or num_classes is None:
        raise FormatError(f"{path}: header missing input/loss/num_classes")
    model = Model(layers, input_shape, num_classes, loss_kind, rng=Rng(0))
    expected = model.n_params() * 4
    actual = len(blob) - pos
    if actual != expected:
        raise FormatError(f"{path}: payload has {actual} bytes, header implies {expected} "
                          f"({model.n_params()} float32 values)")
    flat = np.frombuffer(blob, dtype="<f4", offset=pos).astype(np.float64)
    start = 0
    for p in model.params:
        p[...] = flat[start:start + p.size].reshape(p.shape)
        start += p.size
    return model


def resolve_data(spec, split="train", seed=0, n_per_class=100, size=16):
    """Load a dataset from ``synth``, a CIFAR dir/file, or a saved ``.npz``/dir."""
    if spec == "synth":
        # held-out split uses a disjoint seed stream
        split_seed = seed if split == "train" else seed + 7919
        return synth_dataset(n_per_class, size=size, rng=Rng(split_seed))
    path = Path(spec)
    if path.is_dir():
        if (path / "dataset.npz").exists():
            return load_dataset(path / "dataset.npz")
        return load_cifar10_dir(path, split)
    if path.suffix == ".npz":
        return load_dataset(path)
    if path.exists():
        return load_cifar10(path)
    raise FileNotFoundError(os.fspath(path))
