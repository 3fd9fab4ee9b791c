"""A small ConvNet engine: forward/backward, two losses, two activations, SGD.

Layout is NCHW throughout. Pixels enter the model in intensity levels
[0, 255] and are divided by 255 at the first layer; ``input_grad`` returned by
:func:`backward` is with respect to the unscaled intensities.
"""
import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .tensor import ShapeError, as_tensor

log = logging.getLogger(__name__)

INPUT_SCALE = 1.0 / 255.0

LAYER_KINDS = ("conv", "maxpool", "relu", "tanh", "fully_connected")
LOSS_KINDS = ("softmax_cross_entropy", "multiclass_hinge")
_LOSS_ALIASES = {"softmax": "softmax_cross_entropy", "hinge": "multiclass_hinge"}
FREEZE_SELECTORS = ("fc_layers", "conv_layers", "all", "none")

_model_ids = itertools.count()


class StaleCacheError(RuntimeError):
    pass


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out_channels: int = 0
    kernel_h: int = 0
    kernel_w: int = 0
    stride: int = 1
    window: int = 0
    out_units: int = 0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")

    @property
    def has_params(self):
        return self.kind in ("conv", "fully_connected")

    def header_fields(self):
        """Kind-specific fields, in a fixed order, for serialization."""
        if self.kind == "conv":
            names = ("out_channels", "kernel_h", "kernel_w", "stride")
        elif self.kind == "maxpool":
            names = ("window", "stride")
        elif self.kind == "fully_connected":
            names = ("out_units",)
        else:
            names = ()
        return {n: getattr(self, n) for n in names}


def conv(out_channels, kernel, stride=1):
    kh, kw = (kernel, kernel) if np.isscalar(kernel) else kernel
    return LayerSpec("conv", out_channels=out_channels, kernel_h=kh, kernel_w=kw, stride=stride)


def maxpool(window, stride=None):
    return LayerSpec("maxpool", window=window, stride=window if stride is None else stride)


def relu():
    return LayerSpec("relu")


def tanh():
    return LayerSpec("tanh")


def fully_connected(out_units):
    return LayerSpec("fully_connected", out_units=out_units)


def output_shape(spec, in_shape, index=0):
    """Output shape ``(c, h, w)`` or ``(units,)`` of one layer."""
    if spec.kind in ("relu", "tanh"):
        return in_shape
    if spec.kind == "fully_connected":
        return (spec.out_units,)
    if len(in_shape) != 3:
        raise ShapeError(f"layer {index} ({spec.kind}) needs a CxHxW input, got {in_shape}")
    c, h, w = in_shape
    if spec.kind == "conv":
        kh, kw, s = spec.kernel_h, spec.kernel_w, spec.stride
        out_c = spec.out_channels
    else:
        kh = kw = spec.window
        s = spec.stride
        out_c = c
    if kh > h or kw > w or s < 1:
        raise ShapeError(f"layer {index} ({spec.kind}): window {kh}x{kw}/stride {s} does not fit input {in_shape}")
    return (out_c, (h - kh) // s + 1, (w - kw) // s + 1)


def normalize_loss(kind):
    kind = _LOSS_ALIASES.get(kind, kind)
    if kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind {kind!r}")
    return kind


@dataclass
class Dataset:
    images: np.ndarray  # (n, c, h, w), intensities in [0, 255]
    labels: np.ndarray  # (n,) int64
    num_classes: int = 0

    def __post_init__(self):
        self.images = as_tensor(self.images)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ShapeError(f"dataset images must be n x c x h x w, got {self.images.shape}")
        if len(self.labels) != len(self.images):
            raise ValueError(f"{len(self.labels)} labels for {len(self.images)} images")
        if not self.num_classes:
            self.num_classes = int(self.labels.max()) + 1 if len(self.labels) else 0
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("label outside [0, num_classes)")

    def __len__(self):
        return len(self.labels)

    def subset(self, idx):
        return Dataset(self.images[idx], self.labels[idx], self.num_classes)


class Model:
    """Ordered layers plus one (weight, bias) pair per conv/fc layer.

    ``params`` is the flat list ``[w0, b0, w1, b1, ...]`` in layer order and
    ``frozen`` holds one flag per entry. Conv weights are ``(out, in, kh, kw)``;
    fully connected weights are ``(out, in)`` acting on the flattened input.
    """

    def __init__(self, layers, input_shape, num_classes, loss="softmax_cross_entropy",
                 rng=None, params=None):
        self.layers = list(layers)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.num_classes = int(num_classes)
        self.loss_kind = normalize_loss(loss)
        self.shapes = [self.input_shape]
        for i, spec in enumerate(self.layers):
            self.shapes.append(output_shape(spec, self.shapes[-1], i))
        if self.shapes[-1] != (self.num_classes,):
            raise ShapeError(f"model output {self.shapes[-1]} does not match {num_classes} classes")

        self.slots = {}
        shapes = []
        for i, spec in enumerate(self.layers):
            if not spec.has_params:
                continue
            self.slots[i] = len(shapes)
            in_shape = self.shapes[i]
            if spec.kind == "conv":
                shapes.append((spec.out_channels, in_shape[0], spec.kernel_h, spec.kernel_w))
                shapes.append((spec.out_channels,))
            else:
                shapes.append((spec.out_units, int(np.prod(in_shape))))
                shapes.append((spec.out_units,))
        self.param_shapes = shapes

        if params is not None:
            params = [as_tensor(p).copy() for p in params]
            for k, (p, s) in enumerate(zip(params, shapes)):
                if p.shape != s:
                    raise ShapeError(f"parameter {k}: expected shape {s}, got {p.shape}")
            if len(params) != len(shapes):
                raise ShapeError(f"expected {len(shapes)} parameter tensors, got {len(params)}")
            self.params = params
        else:
            self.params = _init_params(shapes, rng)
        self.frozen = [False] * len(self.params)
        self.id = next(_model_ids)
        self.version = 0
        self.history = []

    def copy(self):
        m = Model(self.layers, self.input_shape, self.num_classes, self.loss_kind, params=self.params)
        m.frozen = list(self.frozen)
        m.history = list(self.history)
        return m

    def layer_params(self, index):
        k = self.slots[index]
        return self.params[k], self.params[k + 1]

    def conv_layer_indices(self):
        return [i for i, s in enumerate(self.layers) if s.kind == "conv"]

    def touch(self):
        self.version += 1

    def n_params(self):
        return sum(int(np.prod(s)) for s in self.param_shapes)


def _init_params(shapes, rng):
    if rng is None:
        raise ValueError("rng required to initialize parameters")
    params = []
    for k, shape in enumerate(shapes):
        if k % 2 == 1:
            params.append(np.zeros(shape))
            continue
        if len(shape) == 4:
            rf = shape[2] * shape[3]
            fan_in, fan_out = shape[1] * rf, shape[0] * rf
        else:
            fan_in, fan_out = shape[1], shape[0]
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        u = rng.uniform(int(np.prod(shape)))
        params.append((lim * (2.0 * u - 1.0)).reshape(shape))
    return params


def desk_cnn(in_channels, size, num_classes, loss="softmax", act="relu", rng=None, width=16):
    """conv5x5 -> act -> pool2 -> conv5x5 -> act -> pool2 -> fc."""
    if act not in ("relu", "tanh"):
        raise ValueError(f"unknown activation {act!r}")
    a = relu if act == "relu" else tanh
    layers = [
        conv(width, 5), a(), maxpool(2),
        conv(width, 5), a(), maxpool(2),
        fully_connected(num_classes),
    ]
    return Model(layers, (in_channels, size, size), num_classes, loss, rng=rng)


@dataclass
class ForwardCache:
    model_id: int
    version: int
    batch_shape: tuple
    entries: list = field(default_factory=list)


def forward(model, batch):
    """Class scores ``(n, num_classes)`` and a cache for :func:`backward`."""
    x = as_tensor(batch)
    if x.ndim != 4 or x.shape[1:] != model.input_shape:
        raise ShapeError(f"layer 0: expected input n x {model.input_shape}, got {x.shape}")
    cache = ForwardCache(model.id, model.version, x.shape)
    x = x * INPUT_SCALE
    for i, spec in enumerate(model.layers):
        if spec.kind == "conv":
            w, b = model.layer_params(i)
            cache.entries.append(x)
            x = kernels.conv2d_forward(x, w, b, spec.stride)
        elif spec.kind == "maxpool":
            out, idx = kernels.maxpool_forward(x, spec.window, spec.stride)
            cache.entries.append((idx, x.shape))
            x = out
        elif spec.kind == "relu":
            x = np.maximum(x, 0.0)
            cache.entries.append(x)
        elif spec.kind == "tanh":
            x = np.tanh(x)
            cache.entries.append(x)
        else:
            w, b = model.layer_params(i)
            flat = x.reshape(len(x), -1)
            cache.entries.append((flat, x.shape))
            x = flat @ w.T + b
    return x, cache


def softmax(scores):
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def loss(model, scores, labels):
    """Mean loss over the batch and its gradient w.r.t. ``scores``."""
    scores = as_tensor(scores)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    n, k = scores.shape
    if k != model.num_classes:
        raise ShapeError(f"scores have {k} columns, model has {model.num_classes} classes")
    if len(labels) != n:
        raise ShapeError(f"{len(labels)} labels for {n} score rows")
    if n and (labels.min() < 0 or labels.max() >= k):
        bad = int(np.flatnonzero((labels < 0) | (labels >= k))[0])
        raise ValueError(f"label {labels[bad]} at row {bad} outside [0, {k})")
    rows = np.arange(n)
    if model.loss_kind == "softmax_cross_entropy":
        z = scores - scores.max(axis=1, keepdims=True)
        logsum = np.log(np.exp(z).sum(axis=1))
        value = float(np.mean(logsum - z[rows, labels]))
        grad = softmax(scores)
        grad[rows, labels] -= 1.0
        return value, grad / n
    margins = scores - scores[rows, labels][:, None] + 1.0
    margins[rows, labels] = 0.0
    active = margins > 0
    value = float(np.sum(np.where(active, margins, 0.0)) / n)
    grad = active.astype(np.float64)
    grad[rows, labels] = -active.sum(axis=1)
    return value, grad / n


def backward(model, cache, grad_scores):
    """Parameter gradients (aligned with ``model.params``) and input gradient."""
    if cache.model_id != model.id or cache.version != model.version:
        raise StaleCacheError("forward cache does not match the current model parameters")
    g = as_tensor(grad_scores)
    grads = [None] * len(model.params)
    for i in reversed(range(len(model.layers))):
        spec = model.layers[i]
        entry = cache.entries[i]
        if spec.kind == "conv":
            w, _ = model.layer_params(i)
            g, dw, db = kernels.conv2d_backward(entry, w, np.ascontiguousarray(g), spec.stride)
            k = model.slots[i]
            grads[k], grads[k + 1] = dw, db
        elif spec.kind == "maxpool":
            idx, in_shape = entry
            g = kernels.maxpool_backward(np.ascontiguousarray(g), idx, in_shape[2], in_shape[3])
        elif spec.kind == "relu":
            g = g * (entry > 0)
        elif spec.kind == "tanh":
            g = g * (1.0 - entry * entry)
        else:
            flat, in_shape = entry
            w, _ = model.layer_params(i)
            k = model.slots[i]
            grads[k], grads[k + 1] = g.T @ flat, g.sum(axis=0)
            g = (g @ w).reshape(in_shape)
    for k, frozen in enumerate(model.frozen):
        if frozen:
            grads[k] = np.zeros_like(model.params[k])
    return grads, g * INPUT_SCALE


def set_frozen(model, selector):
    if selector not in FREEZE_SELECTORS:
        raise ValueError(f"unknown freeze selector {selector!r}")
    for i, k in model.slots.items():
        kind = model.layers[i].kind
        flag = (
            selector == "all"
            or (selector == "fc_layers" and kind == "fully_connected")
            or (selector == "conv_layers" and kind == "conv")
        )
        model.frozen[k] = model.frozen[k + 1] = flag
    return model


def predict_scores(model, images, chunk=1024):
    images = as_tensor(images)
    out = [forward(model, images[s:s + chunk])[0] for s in range(0, len(images), chunk)]
    return np.concatenate(out) if out else np.zeros((0, model.num_classes))


def predict_batch(model, images, chunk=1024):
    # np.argmax returns the first maximum, i.e. ties go to the lowest class
    return np.argmax(predict_scores(model, images, chunk), axis=1)


def predict(model, image):
    image = as_tensor(image)
    return int(predict_batch(model, image[None])[0])


def accuracy(model, data):
    if len(data) == 0:
        return 0.0
    return float(np.mean(predict_batch(model, data.images) == data.labels))


def sgd_train(model, train, epochs, lr, batch_size=16, rng=None):
    """Plain minibatch SGD on the unfrozen parameters, in place.

    Per-epoch mean training loss is appended to ``model.history``.
    """
    if lr < 0:
        raise ValueError(f"learning rate must be >= 0, got {lr}")
    if len(train) == 0:
        raise ValueError("training set is empty")
    if rng is None:
        raise ValueError("rng required for shuffling")
    n = len(train)
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for bi, start in enumerate(range(0, n, batch_size)):
            idx = order[start:start + batch_size]
            scores, cache = forward(model, train.images[idx])
            value, gs = loss(model, scores, train.labels[idx])
            if not np.isfinite(value):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {bi}")
            grads, _ = backward(model, cache, gs)
            for k, (p, gk) in enumerate(zip(model.params, grads)):
                if not model.frozen[k]:
                    p -= lr * gk
            model.touch()
            total += value * len(idx)
        model.history.append(total / n)
        log.info("epoch %d loss %.5f", epoch, total / n)
    return model
