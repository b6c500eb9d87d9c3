"""From-scratch CNN: model, training, evaluation, and serialization."""
from .io import (
    ChecksumError,
    ModelFormatError,
    TruncatedFile,
    VersionError,
    load_model,
    save_model,
)
from .metrics import EvalMetrics, confusion_counts, evaluate, f1_from_precision_recall
from .model import (
    CLASS_LABELS,
    LABEL_TO_CLASS,
    Architecture,
    CnnModel,
    Gradients,
    ShapeError,
    backward,
    conv2d_valid,
    conv2d_valid_backward,
    forward,
    forward_cached,
    init_model,
    loss,
    loss_and_gradients,
    loss_gradient_logits,
    maxpool2x2,
    maxpool2x2_backward,
    predict,
    predict_batch,
    relu,
    softmax,
)
from .train import EpochStats, MissingClass, NonFiniteLoss, TrainConfig, history_to_csv, train

__all__ = [
    "Architecture",
    "CLASS_LABELS",
    "ChecksumError",
    "CnnModel",
    "EpochStats",
    "EvalMetrics",
    "Gradients",
    "LABEL_TO_CLASS",
    "MissingClass",
    "ModelFormatError",
    "NonFiniteLoss",
    "ShapeError",
    "TrainConfig",
    "TruncatedFile",
    "VersionError",
    "backward",
    "confusion_counts",
    "conv2d_valid",
    "conv2d_valid_backward",
    "evaluate",
    "f1_from_precision_recall",
    "forward",
    "forward_cached",
    "history_to_csv",
    "init_model",
    "load_model",
    "loss",
    "loss_and_gradients",
    "loss_gradient_logits",
    "maxpool2x2",
    "maxpool2x2_backward",
    "predict",
    "predict_batch",
    "relu",
    "save_model",
    "softmax",
    "train",
]
