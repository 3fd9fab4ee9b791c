"""Noise-robustness protocols: sigma sweeps, pre-smoothing, noisy augmentation."""
from dataclasses import asdict, dataclass, field

import numpy as np

from .convnet import Dataset, predict_batch, set_frozen, sgd_train
from .spectrum import gaussian_kernel3
from .tensor import Rng, as_tensor, derive_seed, gaussian_fill

SWEEP_SIGMAS = (1.0, 2.0, 4.0, 8.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0)
AUGMENT_SIGMAS = (1.0, 5.0, 10.0, 20.0)


def degrade(image, sigma, rng, quantize=False):
    """Additive Gaussian noise in intensity levels, clamped to [0, 255]."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    image = as_tensor(image)
    if sigma == 0:
        return image.copy()
    out = np.clip(image + gaussian_fill(image.shape, sigma, rng), 0.0, 255.0)
    if quantize:
        out = np.rint(out)
    return out


def smooth(image, kernel=None):
    """Per-channel 3x3 Gaussian (sigma 0.5) smoothing with replicated borders.

    Works on any array whose last two axes are spatial.
    """
    image = as_tensor(image)
    if image.ndim < 2 or image.shape[-1] < 3 or image.shape[-2] < 3:
        raise ValueError(f"smooth needs at least 3x3 spatial extent, got {image.shape}")
    k = gaussian_kernel3(0.5) if kernel is None else kernel
    pad = [(0, 0)] * (image.ndim - 2) + [(1, 1), (1, 1)]
    p = np.pad(image, pad, mode="edge")
    h, w = image.shape[-2:]
    out = np.zeros_like(image)
    for i in range(3):
        for j in range(3):
            out += k[i, j] * p[..., i:i + h, j:j + w]
    return out


@dataclass
class SweepConfig:
    sigmas: tuple = SWEEP_SIGMAS
    trials_per_sigma: int = 100
    smooth_first: bool = False
    seed: int = 0
    quantize: bool = False
    max_images: int = 0  # 0 means no limit

    def __post_init__(self):
        self.sigmas = tuple(float(s) for s in self.sigmas)
        if any(b <= a for a, b in zip(self.sigmas, self.sigmas[1:])):
            raise ValueError(f"sigmas must be strictly increasing: {self.sigmas}")
        if any(s < 0 for s in self.sigmas):
            raise ValueError("sigmas must be non-negative")
        if self.trials_per_sigma < 1:
            raise ValueError("trials_per_sigma must be >= 1")


@dataclass
class SweepRow:
    sigma: float
    images_evaluated: int
    correct: int

    @property
    def accuracy(self):
        return self.correct / self.images_evaluated if self.images_evaluated else 0.0


@dataclass
class SweepReport:
    rows: list
    metadata: dict = field(default_factory=dict)

    def accuracy(self, sigma):
        for r in self.rows:
            if r.sigma == sigma:
                return r.accuracy
        raise KeyError(sigma)


def noisy_batch(images, image_ids, sigma, sigma_index, trials, seed, quantize=False):
    """All ``trials`` noisy variants of each image, grouped image-major.

    Each variant draws its noise from its own seed derived from
    (seed, image id, sigma index, trial), so any subset is reproducible.
    """
    n = len(images)
    out = np.empty((n * trials,) + images.shape[1:])
    for a, (img, iid) in enumerate(zip(images, image_ids)):
        for t in range(trials):
            rng = Rng(derive_seed(seed, iid, sigma_index, t))
            out[a * trials + t] = degrade(img, sigma, rng, quantize)
    return out


def clean_correct(model, data, max_images=0):
    """Indices of images the model classifies correctly without noise."""
    pred = predict_batch(model, data.images)
    idx = np.flatnonzero(pred == data.labels)
    if max_images:
        idx = idx[:max_images]
    return idx


def run_sweep(model, test, cfg, model_id=""):
    idx = clean_correct(model, test, cfg.max_images)
    if len(idx) == 0:
        raise ValueError(f"no clean-correct images among {len(test)} test images; nothing to sweep")
    images, labels = test.images[idx], test.labels[idx]
    expected = np.repeat(labels, cfg.trials_per_sigma)
    rows = []
    for si, sigma in enumerate(cfg.sigmas):
        batch = noisy_batch(images, idx, sigma, si, cfg.trials_per_sigma, cfg.seed, cfg.quantize)
        if cfg.smooth_first:
            batch = smooth(batch)
        correct = int(np.sum(predict_batch(model, batch) == expected))
        rows.append(SweepRow(sigma, len(batch), correct))
    meta = {"model": model_id, "clean_correct_images": len(idx), **asdict(cfg)}
    return SweepReport(sorted(rows, key=lambda r: r.sigma), meta)


def augment_dataset(train, sigmas=AUGMENT_SIGMAS, copies=10, rng=None):
    """Originals followed by ``copies`` noisy variants of each image.

    Each variant's sigma is drawn uniformly from ``sigmas``.
    """
    if len(train) == 0:
        raise ValueError("training set is empty")
    if copies == 0:
        return Dataset(train.images.copy(), train.labels.copy(), train.num_classes)
    rng = Rng(0) if rng is None else rng
    sigmas = np.asarray(sigmas, dtype=np.float64)
    n = len(train)
    picks = sigmas[rng.integers(len(sigmas), n * copies)]
    noisy = np.empty((n * copies,) + train.images.shape[1:])
    for i in range(n):
        for c in range(copies):
            j = i * copies + c
            noisy[j] = degrade(train.images[i], picks[j], rng)
    return Dataset(
        np.concatenate([train.images, noisy]),
        np.concatenate([train.labels, np.repeat(train.labels, copies)]),
        train.num_classes,
    )


def finetune_on_noise(model, noisy, epochs, lr, batch_size=16, rng=None):
    """Conv-only fine-tuning: fully connected layers frozen. Returns a new model."""
    tuned = model.copy()
    set_frozen(tuned, "fc_layers")
    return sgd_train(tuned, noisy, epochs, lr, batch_size, Rng(0) if rng is None else rng)
