"""SGD-with-momentum training loop, bit-reproducible per seed."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..errors import DataError
from .model import CnnModel, Gradients, init_model, loss_and_gradients, predict_batch


class NonFiniteLoss(DataError):
    """Training diverged: the loss became NaN or infinite."""

    def __init__(self, epoch: int, batch_index: int):
        super().__init__(
            f"non-finite loss at epoch {epoch}, batch {batch_index}; "
            "reduce the learning rate"
        )
        self.epoch = epoch
        self.batch_index = batch_index


class MissingClass(DataError):
    """The training set must contain both classes."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0.0:
            raise DataError("learning_rate must be >= 0")
        if not (0.0 <= self.momentum < 1.0):
            raise DataError("momentum must be in [0, 1)")
        if self.batch_size < 1:
            raise DataError("batch_size must be >= 1")
        if self.epochs < 1:
            raise DataError("epochs must be >= 1")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    train_acc: float
    val_acc: Optional[float]


def _accuracy(model: CnnModel, tensors: np.ndarray, labels: np.ndarray) -> float:
    correct = 0
    for start in range(0, len(labels), 512):
        classes, _ = predict_batch(model, tensors[start : start + 512])
        correct += int((classes == labels[start : start + 512]).sum())
    return correct / len(labels)


def train(
    tensors: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig = TrainConfig(),
    val: Optional[tuple[np.ndarray, np.ndarray]] = None,
) -> tuple[CnnModel, list[EpochStats]]:
    """Train from a seeded init; identical (seed, data, config) gives identical bits.

    ``tensors`` is (n, 3, 28, 28), ``labels`` is (n,) class indices. The
    reported per-epoch loss is the sample-weighted mean of batch losses as
    they occurred during the epoch.
    """
    tensors = np.asarray(tensors, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    if len(tensors) == 0:
        raise DataError("training set is empty")
    if len(tensors) != len(labels):
        raise DataError("tensors and labels have different lengths")
    present = set(int(v) for v in np.unique(labels))
    if present != {0, 1}:
        raise MissingClass(f"need both classes 0 and 1, got {sorted(present)}")

    rng = np.random.default_rng(config.seed)
    model = init_model(rng)
    velocity = Gradients(
        conv1_w=np.zeros_like(model.conv1_w),
        conv1_b=np.zeros_like(model.conv1_b),
        conv2_w=np.zeros_like(model.conv2_w),
        conv2_b=np.zeros_like(model.conv2_b),
        fc_w=np.zeros_like(model.fc_w),
        fc_b=np.zeros_like(model.fc_b),
    )

    n = len(labels)
    history: list[EpochStats] = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        for batch_index, start in enumerate(range(0, n, config.batch_size)):
            take = order[start : start + config.batch_size]
            xb, yb = tensors[take], labels[take]
            batch_loss, grads = loss_and_gradients(model, xb, yb)
            if not np.isfinite(batch_loss):
                raise NonFiniteLoss(epoch, batch_index)
            loss_sum += batch_loss * len(take)
            for name, g in grads.parameters():
                v = getattr(velocity, name)
                v *= config.momentum
                v += config.learning_rate * g
                getattr(model, name)[...] -= v
        stats = EpochStats(
            epoch=epoch,
            loss=loss_sum / n,
            train_acc=_accuracy(model, tensors, labels),
            val_acc=_accuracy(model, *val) if val is not None else None,
        )
        history.append(stats)
    return model, history


def history_to_csv(history: Sequence[EpochStats]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "loss", "train_acc", "val_acc"])
    for row in history:
        writer.writerow(
            [
                row.epoch,
                repr(row.loss),
                repr(row.train_acc),
                "" if row.val_acc is None else repr(row.val_acc),
            ]
        )
    return buf.getvalue()
