"""Adam optimizer and the shared early-stopping minibatch loop."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during optimization."""


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and loop settings for categorical cross-entropy training."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience cannot exceed max_epochs")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class Adam:
    """Adam over a list of parameter arrays, updated in place."""

    def __init__(self, params: Sequence[np.ndarray], cfg: TrainConfig):
        self.params = list(params)
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads: Sequence[np.ndarray]) -> None:
        cfg = self.cfg
        self.t += 1
        bc1 = 1.0 - cfg.beta1**self.t
        bc2 = 1.0 - cfg.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * (g * g)
            p -= cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)


def fit(
    params: Sequence[np.ndarray],
    n_train: int,
    grad_fn: Callable[[np.ndarray], tuple[float, list[np.ndarray]]],
    dev_eval: Callable[[], float],
    cfg: TrainConfig,
) -> tuple[list[np.ndarray], list[dict]]:
    """Minibatch Adam with best-dev early stopping.

    `grad_fn` maps a batch index array to (loss, grads); `dev_eval` scores the
    current `params` on the dev split (macro F1). Returns copies of the
    best-scoring parameters and the per-epoch log. With ``max_epochs=0`` the
    initial parameters come back untouched.
    """
    optimizer = Adam(params, cfg)
    rng = np.random.default_rng(cfg.seed)
    log: list[dict] = []
    best_params = [p.copy() for p in params]
    best_f1 = -np.inf
    stale = 0

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n_train)
        losses = []
        for start in range(0, n_train, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, grads = grad_fn(batch)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss {loss!r} at epoch {epoch}, batch offset {start}"
                )
            optimizer.step(grads)
            losses.append(loss)
        dev_f1 = dev_eval()
        log.append({"epoch": epoch, "loss": float(np.mean(losses)), "dev_macro_f1": dev_f1})
        if dev_f1 > best_f1:
            best_f1 = dev_f1
            best_params = [p.copy() for p in params]
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return best_params, log


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax; accepts 1-D or 2-D input."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def cross_entropy_from_logits(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood, computed in log space."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(log_z - shifted[np.arange(len(labels)), labels]))
