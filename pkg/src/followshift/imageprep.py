"""Profile-image filtering, face selection, crop, and resize to the classifier input.

Face *detection* is out of scope: detector output arrives as bounding boxes
in the image manifest (or images arrive pre-cropped with a full-frame box).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np
from PIL import Image

from .errors import DataError

TENSOR_SIDE = 28
SIZE_THRESHOLD_BYTES = 18 * 1024  # inclusive keep threshold on the source file


class NoFace(DataError):
    """No face box available for an image."""


class InvalidBox(DataError):
    """A face box is degenerate or falls outside its raster."""


class ManifestError(DataError):
    """The image manifest CSV is malformed."""


class DropReason(Enum):
    """Why a cohort member never reached classification."""

    NO_IMAGE = "no_image"
    NO_FACE = "no_face"
    BELOW_SIZE_THRESHOLD = "below_size_threshold"
    BELOW_PROBABILITY_FLOOR = "below_probability_floor"


@dataclass(frozen=True)
class RasterImage:
    """Decoded 8-bit RGB raster plus the byte size of its encoded source."""

    pixels: np.ndarray  # (height, width, 3) uint8, row-major
    source_byte_size: int

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3:
            raise DataError(f"pixels must be (h, w, 3), got {px.shape}")
        if px.dtype != np.uint8:
            raise DataError(f"pixels must be uint8, got {px.dtype}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise DataError("image must contain at least one pixel")
        if self.source_byte_size < 0:
            raise DataError("source_byte_size must be non-negative")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class FaceBox:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise InvalidBox(f"box extents must be >= 1, got {self.w}x{self.h}")
        if self.x < 0 or self.y < 0:
            raise InvalidBox(f"box offsets must be >= 0, got ({self.x}, {self.y})")

    @property
    def area(self) -> int:
        return self.w * self.h


@dataclass(frozen=True)
class FaceTensor:
    """Channel-major 3x28x28 tensor of values in [0, 1]: the classifier input."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if d.shape != (3, TENSOR_SIDE, TENSOR_SIDE):
            raise DataError(f"face tensor must be (3, 28, 28), got {d.shape}")
        if d.dtype != np.float64:
            raise DataError(f"face tensor must be float64, got {d.dtype}")
        if not np.isfinite(d).all():
            raise DataError("face tensor contains non-finite values")
        if d.min() < 0.0 or d.max() > 1.0:
            raise DataError("face tensor values outside [0, 1]")


def validate_box(box: FaceBox, image: RasterImage) -> None:
    if box.x + box.w > image.width or box.y + box.h > image.height:
        raise InvalidBox(
            f"box ({box.x},{box.y},{box.w},{box.h}) exceeds "
            f"{image.width}x{image.height} raster"
        )


def select_face(boxes: Sequence[FaceBox]) -> FaceBox:
    """Pick the largest box by area; ties break to smallest (y, then x)."""
    if not boxes:
        raise NoFace("no face boxes to select from")
    return min(boxes, key=lambda b: (-b.area, b.y, b.x))


def size_filter(image: RasterImage, threshold_bytes: int = SIZE_THRESHOLD_BYTES) -> bool:
    """Keep an image iff its encoded source is at least threshold_bytes (inclusive)."""
    return image.source_byte_size >= threshold_bytes


def bilinear_resize(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel-centered sample coordinates.

    Output pixel (i, j) samples the source at
    ((i + 0.5) * h/out_h - 0.5, (j + 0.5) * w/out_w - 0.5), clamped to the
    source extent; an identity resize is exact.
    """
    src = np.asarray(pixels, dtype=np.float64)
    squeeze = src.ndim == 2
    if squeeze:
        src = src[:, :, None]
    h, w, _ = src.shape

    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)

    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]

    top = src[y0][:, x0] * (1.0 - wx) + src[y0][:, x1] * wx
    bottom = src[y1][:, x0] * (1.0 - wx) + src[y1][:, x1] * wx
    out = top * (1.0 - wy) + bottom * wy
    return out[:, :, 0] if squeeze else out


def crop_resize(image: RasterImage, box: FaceBox) -> FaceTensor:
    """Crop a face box, resample to 28x28, and normalize channels into [0, 1]."""
    validate_box(box, image)
    crop = image.pixels[box.y : box.y + box.h, box.x : box.x + box.w]
    resized = bilinear_resize(crop, TENSOR_SIDE, TENSOR_SIDE)
    tensor = resized.transpose(2, 0, 1) / 255.0
    return FaceTensor(data=np.ascontiguousarray(tensor))


def load_image(path: Union[str, Path]) -> RasterImage:
    """Decode a PNG or JPEG file; decoding itself is a library boundary."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            rgb = im.convert("RGB")
            pixels = np.asarray(rgb, dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot decode image {path}: {exc}") from None
    return RasterImage(pixels=pixels, source_byte_size=path.stat().st_size)


def encoded_crop_size(image: RasterImage, box: FaceBox) -> int:
    """Byte size of the face crop re-encoded as PNG (the filter_on='crop' mode)."""
    validate_box(box, image)
    crop = image.pixels[box.y : box.y + box.h, box.x : box.x + box.w]
    buf = io.BytesIO()
    Image.fromarray(crop).save(buf, format="PNG")
    return buf.getbuffer().nbytes


@dataclass(frozen=True)
class ManifestEntry:
    """One manifest row: a user's image path, source byte size, and face boxes."""

    user_id: int
    image_path: str
    byte_size: int
    boxes: tuple[FaceBox, ...] = ()


MANIFEST_HEADER = ["user_id", "image_path", "byte_size"]


def read_manifest(path: Union[str, Path]) -> list[ManifestEntry]:
    """Read a manifest CSV: user_id,image_path,byte_size[,x,y,w,h ...]."""
    path = Path(path)
    entries: list[ManifestEntry] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path}: empty manifest") from None
        if header[:3] != MANIFEST_HEADER:
            raise ManifestError(
                f"{path}: expected header starting {','.join(MANIFEST_HEADER)}"
            )
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 3 or (len(row) - 3) % 4 != 0:
                raise ManifestError(f"{path}:{row_no}: bad column count {len(row)}")
            try:
                user_id = int(row[0])
                byte_size = int(row[2])
                coords = [int(v) for v in row[3:]]
            except ValueError as exc:
                raise ManifestError(f"{path}:{row_no}: {exc}") from None
            boxes = tuple(
                FaceBox(*coords[i : i + 4]) for i in range(0, len(coords), 4)
            )
            entries.append(
                ManifestEntry(
                    user_id=user_id,
                    image_path=row[1],
                    byte_size=byte_size,
                    boxes=boxes,
                )
            )
    return entries


def write_manifest(entries: Iterable[ManifestEntry], path: Union[str, Path]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for e in entries:
            row = [e.user_id, e.image_path, e.byte_size]
            for b in e.boxes:
                row.extend([b.x, b.y, b.w, b.h])
            writer.writerow(row)


@dataclass
class PrepResult:
    """Tensors that survived the filters, plus the per-user drop ledger."""

    user_ids: np.ndarray  # (n,) int64, ascending
    tensors: np.ndarray  # (n, 3, 28, 28) float64
    drops: list[tuple[int, DropReason]] = field(default_factory=list)

    def drop_counts(self) -> dict[DropReason, int]:
        counts = {reason: 0 for reason in DropReason}
        for _, reason in self.drops:
            counts[reason] += 1
        return counts


def prepare_faces(
    entries: Sequence[ManifestEntry],
    images_root: Union[str, Path],
    threshold_bytes: int = SIZE_THRESHOLD_BYTES,
    filter_on: str = "source",
) -> PrepResult:
    """Run manifest entries through the face funnel: filter, select, crop, resize.

    ``filter_on`` selects whether the byte threshold applies to the source
    file size recorded in the manifest or to the PNG-re-encoded crop.
    Entries are processed in ascending user-id order.
    """
    if filter_on not in ("source", "crop"):
        raise DataError(f"filter_on must be 'source' or 'crop', got {filter_on!r}")
    images_root = Path(images_root)
    ordered = sorted(entries, key=lambda e: e.user_id)
    for a, b in zip(ordered, ordered[1:]):
        if a.user_id == b.user_id:
            raise ManifestError(f"duplicate manifest entry for user {a.user_id}")
    user_ids: list[int] = []
    tensors: list[np.ndarray] = []
    drops: list[tuple[int, DropReason]] = []
    for entry in ordered:
        if not entry.boxes:
            drops.append((entry.user_id, DropReason.NO_FACE))
            continue
        if filter_on == "source" and entry.byte_size < threshold_bytes:
            drops.append((entry.user_id, DropReason.BELOW_SIZE_THRESHOLD))
            continue
        image = load_image(images_root / entry.image_path)
        box = select_face(entry.boxes)
        if filter_on == "crop" and encoded_crop_size(image, box) < threshold_bytes:
            drops.append((entry.user_id, DropReason.BELOW_SIZE_THRESHOLD))
            continue
        tensors.append(crop_resize(image, box).data)
        user_ids.append(entry.user_id)
    stacked = (
        np.stack(tensors)
        if tensors
        else np.empty((0, 3, TENSOR_SIDE, TENSOR_SIDE), dtype=np.float64)
    )
    return PrepResult(
        user_ids=np.asarray(user_ids, dtype=np.int64),
        tensors=stacked,
        drops=drops,
    )


def stack_faces(tensors: Sequence[FaceTensor]) -> np.ndarray:
    """Stack FaceTensors into the (n, 3, 28, 28) batch layout."""
    if not tensors:
        return np.empty((0, 3, TENSOR_SIDE, TENSOR_SIDE), dtype=np.float64)
    return np.stack([t.data for t in tensors])
