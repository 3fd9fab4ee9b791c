"""The desk-scale reference configuration shared by the CLI and the acceptance suite."""
from dataclasses import dataclass

from .convnet import desk_cnn, sgd_train
from .io import resolve_data
from .tensor import Rng, derive_seed


@dataclass(frozen=True)
class ReferenceConfig:
    seed: int = 1
    n_train_per_class: int = 100
    n_test_per_class: int = 50
    size: int = 16
    loss: str = "softmax"
    act: str = "relu"
    epochs: int = 20
    lr: float = 0.1
    batch_size: int = 16
    finetune_epochs: int = 3
    finetune_lr: float = 0.05
    augment_copies: int = 10


def train_model(data, loss="softmax", act="relu", epochs=20, lr=0.1, batch_size=16, seed=1):
    """Build a desk-cnn for ``data`` and train it; init and shuffling use separate streams."""
    _, c, h, w = data.images.shape
    if h != w:
        raise ValueError(f"desk-cnn expects square images, got {h}x{w}")
    model = desk_cnn(c, h, data.num_classes, loss, act, rng=Rng(derive_seed(seed, 0)))
    return sgd_train(model, data, epochs, lr, batch_size, Rng(derive_seed(seed, 1)))


def reference_data(cfg=ReferenceConfig()):
    train = resolve_data("synth", "train", cfg.seed, cfg.n_train_per_class, cfg.size)
    test = resolve_data("synth", "test", cfg.seed, cfg.n_test_per_class, cfg.size)
    return train, test


def reference_model(cfg=ReferenceConfig(), train=None):
    if train is None:
        train, _ = reference_data(cfg)
    return train_model(train, cfg.loss, cfg.act, cfg.epochs, cfg.lr, cfg.batch_size, cfg.seed)


def reference_finetune(model, train, cfg=ReferenceConfig()):
    """Noisy augmentation followed by conv-only fine-tuning."""
    from .harness import augment_dataset, finetune_on_noise

    noisy = augment_dataset(train, copies=cfg.augment_copies, rng=Rng(derive_seed(cfg.seed, 2)))
    tuned = finetune_on_noise(model, noisy, cfg.finetune_epochs, cfg.finetune_lr,
                              cfg.batch_size, Rng(derive_seed(cfg.seed, 3)))
    return tuned, noisy
