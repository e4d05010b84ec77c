"""Per-feature importance read off the self-attention weights."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .exceptions import ConfigError
from .network import Network
from .training import _param_dtype


@dataclass
class AttentionReport:
    feature_names: list
    scores: np.ndarray
    group_names: list
    group_scores: np.ndarray
    n_samples: int

    def top(self, k: int, grouped: bool = False) -> list:
        """``[(rank, name, score), ...]`` sorted by score, ties by position; ``k`` beyond the size lists all."""
        names = self.group_names if grouped else self.feature_names
        scores = self.group_scores if grouped else self.scores
        order = sorted(range(len(scores)), key=lambda j: (-scores[j], j))[:k]
        return [(rank, names[j], float(scores[j])) for rank, j in enumerate(order, start=1)]

    def rank_of(self, name: str, grouped: bool = False) -> int:
        for rank, n, _ in self.top(len(self.scores), grouped):
            if n == name:
                return rank
        raise KeyError(name)


def attention_weights(model: Network, X, batch_size: int = 256) -> np.ndarray:
    """Inference-mode attention matrices ``[n, L, L]``."""
    if model.attention is None:
        raise ConfigError("model has no self-attention layer; importance scores need attention")
    if not model.cfg.length_preserving:
        raise ConfigError(
            "pooling stride > 1 shortens the sequence, so attention positions no longer map to input features"
        )
    X = np.asarray(X, dtype=_param_dtype(model))
    out = []
    with T.no_grad():
        for i in range(0, len(X), batch_size):
            _, w = model(X[i:i + batch_size], training=False, return_attention=True)
            out.append(w.data)
    return np.concatenate(out, axis=0)


def importance_from_weights(weights: np.ndarray, reduce: str = "mean") -> np.ndarray:
    """Collapse ``[n, L, L]`` attention rows into one score per position.

    ``mean`` is the attention each position receives, averaged over query
    rows and samples, and sums to 1. ``max`` takes the largest weight any
    query gives the position, averaged over samples, then renormalizes.
    """
    if reduce == "mean":
        return weights.mean(axis=(0, 1))
    if reduce == "max":
        s = weights.max(axis=1).mean(axis=0)
        return s / s.sum()
    raise ValueError(f"reduce must be 'mean' or 'max', got {reduce!r}")


def attention_importance(model: Network, X, feature_names=None, groups=None,
                         reduce: str = "mean", aggregate: str = "sum") -> AttentionReport:
    """Score encoded columns by received attention and fold one-hot groups back to original columns.

    ``groups`` maps each original column to its ``(start, stop)`` span of
    encoded columns; ``aggregate`` combines a span by ``sum`` or ``max``.
    """
    X = np.asarray(X)
    n_features = X.shape[1]
    names = list(feature_names) if feature_names is not None else [f"f{j}" for j in range(n_features)]
    if len(names) != n_features:
        raise ValueError(f"{len(names)} feature names for {n_features} encoded columns")
    scores = importance_from_weights(attention_weights(model, X), reduce)
    groups = groups or {n: (j, j + 1) for j, n in enumerate(names)}
    combine = {"sum": np.sum, "max": np.max}.get(aggregate)
    if combine is None:
        raise ValueError(f"aggregate must be 'sum' or 'max', got {aggregate!r}")
    gnames = list(groups)
    gscores = np.array([combine(scores[lo:hi]) for lo, hi in groups.values()])
    return AttentionReport(names, scores, gnames, gscores, len(X))
