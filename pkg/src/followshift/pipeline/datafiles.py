"""On-disk interchange formats shared by the CLI stages.

- faces.npz: arrays ``user_ids`` (n,) int64 and ``tensors`` (n,3,28,28) float64
- labels.csv: ``user_id,label`` with label in {male,female,unknown}
- profiles.csv: ``user_id,display_name``
- predictions.csv: ``user_id,label,probability``
- drops.csv: ``user_id,reason``
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from ..errors import DataError
from ..imageprep import DropReason
from ..weaklabel import WeakLabel


def save_faces(
    path: Union[str, Path], user_ids: np.ndarray, tensors: np.ndarray
) -> None:
    if len(user_ids) != len(tensors):
        raise DataError("user_ids and tensors must have matching lengths")
    np.savez(
        path,
        user_ids=np.asarray(user_ids, dtype=np.int64),
        tensors=np.asarray(tensors, dtype=np.float64),
    )


def load_faces(path: Union[str, Path]) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"faces file not found: {path}")
    with np.load(path) as data:
        try:
            return data["user_ids"], data["tensors"]
        except KeyError as exc:
            raise DataError(f"{path}: missing array {exc}") from None


def _read_csv_rows(
    path: Union[str, Path], expected_header: list[str]
) -> Iterable[list[str]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty CSV") from None
        if header != expected_header:
            raise DataError(
                f"{path}: expected header {','.join(expected_header)}, "
                f"got {','.join(header)}"
            )
        yield from (row for row in reader if row)


def write_profiles(
    path: Union[str, Path], rows: Sequence[tuple[int, str]]
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "display_name"])
        writer.writerows(rows)


def read_profiles(path: Union[str, Path]) -> list[tuple[int, str]]:
    out = []
    for row in _read_csv_rows(path, ["user_id", "display_name"]):
        out.append((int(row[0]), row[1]))
    return out


def write_labels(
    path: Union[str, Path], rows: Sequence[tuple[int, WeakLabel]]
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "label"])
        for user_id, label in rows:
            writer.writerow([user_id, label.value])


def read_labels(path: Union[str, Path]) -> dict[int, WeakLabel]:
    out: dict[int, WeakLabel] = {}
    for row in _read_csv_rows(path, ["user_id", "label"]):
        try:
            out[int(row[0])] = WeakLabel(row[1])
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from None
    return out


def write_predictions(
    path: Union[str, Path], rows: Sequence[tuple[int, WeakLabel, float]]
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "label", "probability"])
        for user_id, label, prob in rows:
            writer.writerow([user_id, label.value, repr(prob)])


def write_drops(
    path: Union[str, Path], drops: Sequence[tuple[int, DropReason]]
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "reason"])
        for user_id, reason in drops:
            writer.writerow([user_id, reason.value])
