"""Versioned binary model files with a CRC32 integrity check.

Layout (all integers little-endian):

    magic 'CNNW' | u32 format_version | u32 descriptor_len | descriptor JSON
    | u64 param_count | param_count f64 values | u32 CRC32 of all prior bytes

Parameters are stored flat in C order: conv1 kernels, conv1 biases, conv2
kernels, conv2 biases, fc weights, fc biases.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path
from typing import Union

import numpy as np

from ..errors import DataError
from .model import Architecture, CnnModel

MAGIC = b"CNNW"
FORMAT_VERSION = 1


class ModelFormatError(DataError):
    """The model file is not a readable model of a supported kind."""


class VersionError(ModelFormatError):
    pass


class ChecksumError(ModelFormatError):
    pass


class TruncatedFile(ModelFormatError):
    pass


def save_model(model: CnnModel, path: Union[str, Path]) -> None:
    descriptor = json.dumps(model.arch.to_dict(), sort_keys=True).encode("utf-8")
    flat = np.concatenate([arr.ravel() for _, arr in model.parameters()])
    payload = b"".join(
        [
            MAGIC,
            struct.pack("<I", FORMAT_VERSION),
            struct.pack("<I", len(descriptor)),
            descriptor,
            struct.pack("<Q", flat.size),
            flat.astype("<f8").tobytes(),
        ]
    )
    checksum = struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    Path(path).write_bytes(payload + checksum)


def _take(blob: bytes, offset: int, count: int, what: str) -> tuple[bytes, int]:
    if offset + count > len(blob):
        raise TruncatedFile(f"model file truncated while reading {what}")
    return blob[offset : offset + count], offset + count


def load_model(path: Union[str, Path]) -> CnnModel:
    """Load a model file; bit-exact inverse of save_model."""
    try:
        blob = Path(path).read_bytes()
    except FileNotFoundError:
        raise DataError(f"model file not found: {path}") from None
    if len(blob) < 4:
        raise TruncatedFile("model file shorter than magic")
    stored_crc_bytes, _ = _take(blob, len(blob) - 4, 4, "checksum")
    body = blob[:-4]
    if zlib.crc32(body) & 0xFFFFFFFF != struct.unpack("<I", stored_crc_bytes)[0]:
        raise ChecksumError("model file failed CRC32 verification")

    offset = 0
    magic, offset = _take(body, offset, 4, "magic")
    if magic != MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}; not a model file")
    raw, offset = _take(body, offset, 4, "format version")
    version = struct.unpack("<I", raw)[0]
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported format version {version}")
    raw, offset = _take(body, offset, 4, "descriptor length")
    desc_len = struct.unpack("<I", raw)[0]
    raw, offset = _take(body, offset, desc_len, "descriptor")
    try:
        arch = Architecture.from_dict(json.loads(raw.decode("utf-8")))
    except (ValueError, KeyError) as exc:
        raise ModelFormatError(f"bad architecture descriptor: {exc}") from None
    raw, offset = _take(body, offset, 8, "parameter count")
    count = struct.unpack("<Q", raw)[0]
    raw, offset = _take(body, offset, count * 8, "parameters")
    if offset != len(body):
        raise ModelFormatError("trailing bytes after parameters")
    flat = np.frombuffer(raw, dtype="<f8").astype(np.float64)

    k = arch.kernel_size
    c1, c2 = arch.conv_channels
    shapes = [
        (c1, arch.input_channels, k, k),
        (c1,),
        (c2, c1, k, k),
        (c2,),
        (arch.num_classes, arch.feature_dim),
        (arch.num_classes,),
    ]
    expected = sum(int(np.prod(s)) for s in shapes)
    if count != expected:
        raise ModelFormatError(
            f"parameter count {count} does not match architecture ({expected})"
        )
    arrays = []
    pos = 0
    for shape in shapes:
        size = int(np.prod(shape))
        arrays.append(flat[pos : pos + size].reshape(shape).copy())
        pos += size
    return CnnModel(*arrays, arch=arch)
