"""Loss, Adam, the mini-batch training loop and batched inference."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .config import TrainConfig
from .exceptions import DataError, ShapeError
from .layers import Module
from .tensor import Tape, Tensor

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


def sparse_ce_loss(probs: Tensor, labels) -> Tensor:
    """Mean of ``-log(probs[i, labels[i]])`` with probabilities floored at 1e-12."""
    labels = np.asarray(labels)
    if probs.ndim != 2:
        raise ShapeError(f"loss expects probabilities [b, n], got {probs.shape}")
    if labels.shape != (probs.shape[0],):
        raise ShapeError(f"got {labels.shape[0] if labels.ndim else 0} labels for a batch of {probs.shape[0]}")
    if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        raise DataError(f"labels must lie in [0, {probs.shape[1]}), got range [{labels.min()}, {labels.max()}]")
    picked = T.pick(probs, labels.astype(np.intp))
    return T.scale(T.mean_all(T.log(picked, PROB_FLOOR)), -1.0)


class Adam:
    """Bias-corrected Adam over a name -> Tensor parameter map."""

    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    @classmethod
    def from_config(cls, params: dict, cfg: TrainConfig) -> "Adam":
        return cls(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)

    def step(self, grads: dict):
        """Apply one update; ``grads`` maps parameter names to gradient arrays."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            g = grads[k]
            if g.shape != p.shape:
                raise ShapeError(f"gradient for {k} has shape {g.shape}, parameter has {p.shape}")
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            m_hat = self.m[k] / c1
            v_hat = self.v[k] / c2
            p.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype)


def adam_step(params: dict, grads: dict, state: Adam | None, cfg: TrainConfig) -> Adam:
    """Functional entry point: create the optimizer state on first use, then step."""
    state = state or Adam.from_config(params, cfg)
    state.step(grads)
    return state


@dataclass
class History:
    loss: list = field(default_factory=list)
    accuracy: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"loss": list(self.loss), "accuracy": list(self.accuracy)}

    @classmethod
    def from_dict(cls, d: dict) -> "History":
        return cls(list(d.get("loss", [])), list(d.get("accuracy", [])))


def batch_slices(n: int, batch_size: int, rng: np.random.Generator | None = None) -> list:
    """Index batches over ``n`` rows; a trailing batch of one joins the previous batch."""
    order = rng.permutation(n) if rng is not None else np.arange(n)
    batches = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches


def check_inputs(model: Module, X: np.ndarray, y=None):
    X = np.asarray(X)
    if X.ndim != 2:
        raise ShapeError(f"expected a 2-D feature matrix, got shape {X.shape}")
    cfg = getattr(model, "cfg", None)
    if cfg is not None and cfg.n_features is not None and X.shape[1] != cfg.n_features:
        raise ShapeError(f"data has {X.shape[1]} encoded features but the model was built for {cfg.n_features}")
    if y is not None:
        y = np.asarray(y)
        if y.shape != (X.shape[0],):
            raise ShapeError(f"{y.shape} labels for {X.shape[0]} rows")
        if cfg is not None and y.size and (y.min() < 0 or y.max() >= cfg.n_classes):
            raise DataError(f"labels must lie in [0, {cfg.n_classes})")


def _param_dtype(model: Module):
    params = model.parameters()
    return params[0].dtype if params else T.default_dtype()


def train(model: Module, X, y, cfg: TrainConfig, optimizer: Adam | None = None) -> History:
    """Mini-batch training with seeded shuffling and dropout streams.

    History holds the per-epoch mean training loss and the accuracy of the
    train-mode predictions made along the way.
    """
    check_inputs(model, X, y)
    X = np.asarray(X, dtype=_param_dtype(model))
    y = np.asarray(y, dtype=np.intp)
    if X.shape[0] < 2:
        raise DataError("training needs at least two rows")
    params = dict(model.named_parameters())
    opt = optimizer or Adam.from_config(params, cfg)
    shuffle_seq, dropout_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    dropout_rng = np.random.default_rng(dropout_seq)
    history = History()
    for epoch in range(cfg.epochs):
        total, correct = 0.0, 0
        for idx in batch_slices(len(X), cfg.batch_size, shuffle_rng):
            with Tape(check_finite=cfg.check_finite) as tape:
                probs = model(X[idx], training=True, rng=dropout_rng)
                loss = sparse_ce_loss(probs, y[idx])
            grads = T.backward(loss, tape, wrt=params.values())
            opt.step({k: grads[p.id] for k, p in params.items()})
            total += loss.item() * len(idx)
            correct += int((probs.data.argmax(axis=1) == y[idx]).sum())
        history.loss.append(total / len(X))
        history.accuracy.append(correct / len(X))
        log.debug("epoch %d loss %.4f acc %.4f", epoch + 1, history.loss[-1], history.accuracy[-1])
    return history


def predict_proba(model: Module, X, batch_size: int = 512) -> np.ndarray:
    """Inference-mode class probabilities (dropout off, batch norm on running statistics)."""
    check_inputs(model, X)
    X = np.asarray(X, dtype=_param_dtype(model))
    with T.no_grad():
        parts = [model(X[i:i + batch_size], training=False).data for i in range(0, len(X), batch_size)]
    if not parts:
        n = model.cfg.n_classes if hasattr(model, "cfg") else 0
        return np.zeros((0, n), dtype=X.dtype)
    return np.concatenate(parts, axis=0)


def predict(model: Module, X, batch_size: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(classes, probabilities)``; ties go to the lowest class index."""
    probs = predict_proba(model, X, batch_size)
    return probs.argmax(axis=1), probs
