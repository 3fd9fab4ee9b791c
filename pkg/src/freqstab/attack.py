"""Minimal additive noise that flips a classification.

Minimizes ``psi(L(X + r), c, k) + lam * ||r||_2`` over ``r`` by gradient
descent, where ``L`` is the class-probability vector (raw scores for hinge
models) and ``psi`` is ``beta * L[c]`` while ``c`` still wins, otherwise
``L[k] - L[c]``.
"""
from dataclasses import asdict, dataclass, field

import numpy as np

from .convnet import backward, forward, predict, softmax
from .tensor import as_tensor, l2_norm


class AttackDiverged(RuntimeError):
    pass


@dataclass
class AttackConfig:
    lam: float = 1e-5
    beta: float = 5.0
    k: object = "auto"  # target class index or "auto" (runner-up of clean scores)
    step_size: float = 1.0  # intensity levels per step
    max_iters: int = 500
    patience: int = 10
    tol: float = 1e-3

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.beta <= 1:
            raise ValueError("beta must be > 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be > 0")
        if self.max_iters < 0 or self.patience < 1 or self.tol < 0:
            raise ValueError("max_iters >= 0, patience >= 1 and tol >= 0 required")


@dataclass
class AttackResult:
    noise: np.ndarray
    success: bool
    iterations: int
    norm_trace: list
    final_scores: np.ndarray
    target: int = -1
    branches: list = field(default_factory=list)  # 1 = beta*L[c], 2 = L[k]-L[c]
    config: dict = field(default_factory=dict)


def psi(L, c, k, beta):
    L = np.asarray(L, dtype=np.float64)
    if c == k:
        raise ValueError(f"true class and target class are both {c}")
    if int(np.argmax(L)) == c:
        return beta * L[c]
    return L[k] - L[c]


def _psi_grad(L, c, k, beta):
    g = np.zeros_like(L)
    if int(np.argmax(L)) == c:
        g[c] = beta
        return g, 1
    g[k] += 1.0
    g[c] -= 1.0
    return g, 2


def class_vector(model, scores):
    """The vector fed to psi: probabilities, or raw scores for hinge models."""
    if model.loss_kind == "softmax_cross_entropy":
        return softmax(scores)
    return scores


def _evaluate(model, image, r, c, k, cfg):
    eff = np.clip(image + r, 0.0, 255.0) - image
    scores, cache = forward(model, (image + eff)[None])
    L = class_vector(model, scores)[0]
    value = psi(L, c, k, cfg.beta)
    dL, branch = _psi_grad(L, c, k, cfg.beta)
    if model.loss_kind == "softmax_cross_entropy":
        dscores = L * (dL - np.dot(L, dL))
    else:
        dscores = dL
    _, gx = backward(model, cache, dscores[None])
    inside = (image + r >= 0.0) & (image + r <= 255.0)
    grad = gx[0] * inside
    norm = l2_norm(r)
    value += cfg.lam * norm
    if norm > 0:
        grad = grad + cfg.lam * r / norm
    if not np.isfinite(value):
        raise AttackDiverged(f"non-finite objective {value}")
    return value, grad, scores[0], branch, eff


def objective(model, image, r, c, cfg, k=None):
    """Objective value and its gradient with respect to ``r``."""
    image, r = as_tensor(image), as_tensor(r)
    k = _resolve_target(model, image, c, cfg) if k is None else k
    value, grad, *_ = _evaluate(model, image, r, c, k, cfg)
    return value, grad


def _resolve_target(model, image, c, cfg):
    if cfg.k != "auto":
        k = int(cfg.k)
        if k == c:
            raise ValueError(f"target class {k} equals the true class")
        return k
    scores = forward(model, image[None])[0][0]
    order = np.argsort(-scores, kind="stable")
    return int(order[0] if order[0] != c else order[1])


def find_minimal_noise(model, image, c, cfg=None):
    """Gradient descent on the additive noise, starting from zero.

    Steps have length ``step_size`` (L2, intensity levels) along the negative
    gradient. The returned noise is the smallest-norm iterate that flipped
    the prediction, or the last iterate if none did; it is stored as the
    effective perturbation after clamping to [0, 255].
    """
    cfg = AttackConfig() if cfg is None else cfg
    image = as_tensor(image)
    if predict(model, image) != c:
        raise ValueError(f"image is not classified as its true class {c}")
    snapshot = [p.copy() for p in model.params]
    k = _resolve_target(model, image, c, cfg)

    r = np.zeros_like(image)
    value, grad, scores, branch, _ = _evaluate(model, image, r, c, k, cfg)
    best = None
    trace, branches = [], []
    streak = 0
    prev_norm = 0.0
    last_scores, last_eff = scores, r
    for it in range(cfg.max_iters):
        gnorm = l2_norm(grad)
        if gnorm == 0:
            break
        r = r - cfg.step_size * grad / gnorm
        value, grad, scores, branch, eff = _evaluate(model, image, r, c, k, cfg)
        norm = l2_norm(r)
        if not np.isfinite(norm):
            raise AttackDiverged(f"non-finite noise norm at iteration {it}; trace {trace[-5:]}")
        trace.append(norm)
        branches.append(branch)
        last_scores, last_eff = scores, eff
        flipped = int(np.argmax(scores)) != c
        streak = streak + 1 if flipped else 0
        if flipped:
            eff_norm = l2_norm(eff)
            if best is None or eff_norm < best[0]:
                best = (eff_norm, eff, scores)
        rel = abs(norm - prev_norm) / norm if norm > 0 else 0.0
        prev_norm = norm
        if streak >= cfg.patience and rel < cfg.tol:
            break

    for p, q in zip(model.params, snapshot):
        if not np.array_equal(p, q):
            raise RuntimeError("model parameters changed during attack")

    if best is not None:
        noise, final = best[1], best[2]
    else:
        noise, final = last_eff, last_scores
    success = predict(model, image + noise) != c
    return AttackResult(noise, success, len(trace), trace, final, k, branches, asdict(cfg))
