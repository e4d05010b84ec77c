"""Dense GRU/convolution network with self-attention for tabular intrusion detection."""
__version__ = "0.1.0"

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ArchitectureConfig, TrainConfig
from .data import (EncodedDataset, LabelTaxonomy, Preprocessor, RawDataset, Schema, load_csv,
                   stratified_kfold)
from .estimator import DualNetClassifier
from .exceptions import (CheckpointError, ConfigError, DataError, DualNetError, NonFiniteError,
                         ShapeError, UnsupportedVersionError)
from .explain import AttentionReport, attention_importance
from .metrics import ConfusionCounts, MetricsReport, confusion, evaluate, metrics, per_class_report
from .network import Network, build_network
from .training import predict, predict_proba, train

__all__ = [
    "ArchitectureConfig", "AttentionReport", "Checkpoint", "CheckpointError", "ConfigError",
    "ConfusionCounts", "DataError", "DualNetClassifier", "DualNetError", "EncodedDataset",
    "LabelTaxonomy", "MetricsReport", "Network", "NonFiniteError", "Preprocessor", "RawDataset",
    "Schema", "ShapeError", "TrainConfig", "UnsupportedVersionError", "attention_importance",
    "build_network", "confusion", "evaluate", "load_checkpoint", "load_csv", "metrics",
    "per_class_report", "predict", "predict_proba", "save_checkpoint", "stratified_kfold", "train",
]
