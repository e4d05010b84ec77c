"""scikit-learn style classifier wrapping network construction and training."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .config import ArchitectureConfig, TrainConfig
from .exceptions import ConfigError, DataError, ShapeError
from .explain import attention_importance
from .network import Network
from .tensor import precision as precision_ctx
from .training import predict_proba, train

_ARCH_FIELDS = ("family", "n_blocks", "growth_rate", "stem_width", "kernel_size", "pool_size",
                "pool_stride", "dropout_rate", "attention", "attention_width", "connectivity")


def check_features(X, n_features: int | None = None) -> np.ndarray:
    """2-D finite float matrix, optionally of a fixed width."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ShapeError(f"expected a 2-D feature matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DataError("feature matrix contains NaN or infinite values")
    if n_features is not None and X.shape[1] != n_features:
        raise ShapeError(f"X has {X.shape[1]} features, estimator was fitted with {n_features}")
    return X


def check_labels(y, n_rows: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or len(y) != n_rows:
        raise ShapeError(f"expected {n_rows} labels in a 1-D array, got shape {y.shape}")
    return y


class DualNetClassifier(ClassifierMixin, BaseEstimator):
    """Fit/predict wrapper: labels may be any sortable values, mapped to ``classes_``.

    The first entry of ``classes_`` plays the normal role in binary metrics,
    so pass integer labels with 0 = normal when that matters.
    """

    def __init__(self, family="dualnet", n_blocks=1, growth_rate=2, stem_width=8, kernel_size=3,
                 pool_size=2, pool_stride=1, dropout_rate=0.4, attention=True, attention_width=None,
                 connectivity="concat", learning_rate=1e-3, batch_size=32, epochs=10,
                 precision="double", seed=0):
        self.family = family
        self.n_blocks = n_blocks
        self.growth_rate = growth_rate
        self.stem_width = stem_width
        self.kernel_size = kernel_size
        self.pool_size = pool_size
        self.pool_stride = pool_stride
        self.dropout_rate = dropout_rate
        self.attention = attention
        self.attention_width = attention_width
        self.connectivity = connectivity
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.precision = precision
        self.seed = seed

    def _configs(self, n_features: int, n_classes: int):
        arch = ArchitectureConfig(**{k: getattr(self, k) for k in _ARCH_FIELDS},
                                  n_classes=n_classes, n_features=n_features, seed=self.seed)
        tc = TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size,
                         epochs=self.epochs, seed=self.seed, precision=self.precision)
        return arch, tc

    def fit(self, X, y):
        X = check_features(X)
        y = check_labels(y, len(X))
        self.classes_, codes = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise DataError("need at least two classes to fit")
        self.arch_config_, self.train_config_ = self._configs(X.shape[1], len(self.classes_))
        with precision_ctx(self.precision):
            self.model_ = Network(self.arch_config_)
        self.history_ = train(self.model_, X, codes, self.train_config_)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return predict_proba(self.model_, check_features(X, self.n_features_in_))

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.classes_[self.predict_proba(X).argmax(axis=1)]

    def attention_importance(self, X, feature_names=None, groups=None, reduce="mean"):
        check_is_fitted(self, "model_")
        if self.model_.attention is None:
            raise ConfigError("estimator was fitted without attention")
        return attention_importance(self.model_, check_features(X, self.n_features_in_),
                                    feature_names, groups, reduce)
