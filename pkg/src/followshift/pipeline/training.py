"""Glue between weak labels, prepared faces, and the training loop."""
from __future__ import annotations

import numpy as np

from ..cnn import LABEL_TO_CLASS
from ..errors import DataError
from ..weaklabel import WeakLabel, build_balanced_set


def assemble_training_set(
    user_ids: np.ndarray,
    tensors: np.ndarray,
    labels: dict[int, WeakLabel],
    seed: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Join faces with weak labels and balance the classes.

    Returns (tensors, class_indices, user_ids) for the balanced subset.
    Users without a label entry count as Unknown and are dropped, as are
    explicit Unknowns; the majority gender is seeded-downsampled to 1:1.
    """
    if len(user_ids) != len(tensors):
        raise DataError("user_ids and tensors must have matching lengths")
    pool = [
        (i, labels.get(int(uid), WeakLabel.UNKNOWN))
        for i, uid in enumerate(user_ids)
    ]
    balanced = build_balanced_set(pool, seed=seed)
    idx = np.array([i for i, _ in balanced], dtype=np.intp)
    y = np.array([LABEL_TO_CLASS[label] for _, label in balanced], dtype=np.intp)
    return tensors[idx], y, np.asarray(user_ids)[idx]
