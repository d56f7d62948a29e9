"""Readers and writers for the on-disk formats.

WSST tensor layout (little-endian, no padding)::

    offset 0   b"WSST"
    offset 4   version   u8 = 1
    offset 5   dtype     u8 = 1  (float32)
    offset 6   rank      u8 in {2, 3}
    offset 7   reserved  u8 = 0
    offset 8   rank x u32 dimensions
    then       prod(dims) x float32 payload, C-order
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError, InvalidArgumentError
from .grids import IGNORE, ImageTags, as_label_map

MAGIC = b"WSST"
VERSION = 1
DTYPE_F32 = 1
HEADER_SIZE = 8


def encode_tensor(a) -> bytes:
    arr = np.asarray(a)
    if arr.ndim not in (2, 3):
        raise InvalidArgumentError(f"WSST supports rank 2 or 3, got rank {arr.ndim}")
    if min(arr.shape) < 1:
        raise InvalidArgumentError(f"WSST dimensions must be >= 1, got {arr.shape}")
    header = MAGIC + bytes([VERSION, DTYPE_F32, arr.ndim, 0])
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return header + dims + payload


def decode_tensor(buf: bytes, path=None) -> np.ndarray:
    """Parse WSST bytes into a float64 array. Raises FormatError with the failing offset."""
    n = len(buf)
    if n < HEADER_SIZE:
        raise FormatError(f"truncated header ({n} of {HEADER_SIZE} bytes)", path, n)
    if buf[:4] != MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}", path, 0)
    if buf[4] != VERSION:
        raise FormatError(f"unsupported version {buf[4]}", path, 4)
    if buf[5] != DTYPE_F32:
        raise FormatError(f"unsupported dtype code {buf[5]}", path, 5)
    rank = buf[6]
    if rank not in (2, 3):
        raise FormatError(f"unsupported rank {rank}", path, 6)
    if buf[7] != 0:
        raise FormatError("reserved byte must be zero", path, 7)
    dims_end = HEADER_SIZE + 4 * rank
    if n < dims_end:
        raise FormatError(f"truncated dimensions ({n} of {dims_end} bytes)", path, n)
    dims = struct.unpack_from(f"<{rank}I", buf, HEADER_SIZE)
    for k, d in enumerate(dims):
        if d < 1:
            raise FormatError("zero dimension", path, HEADER_SIZE + 4 * k)
    expected = dims_end + 4 * int(np.prod(dims, dtype=np.int64))
    if n < expected:
        raise FormatError(f"truncated payload ({n} of {expected} bytes)", path, n)
    if n > expected:
        raise FormatError(f"{n - expected} trailing bytes", path, expected)
    data = np.frombuffer(buf, dtype="<f4", offset=dims_end)
    return data.reshape(dims).astype(np.float64)


def write_tensor(path, a) -> None:
    Path(path).write_bytes(encode_tensor(a))


def read_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes(), path)


def _png_bytes(arr: np.ndarray) -> bytes:
    out = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(arr, dtype=np.uint8)).save(out, format="PNG")
    return out.getvalue()


def _read_gray(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.mode != "L":
                raise FormatError(f"expected 8-bit single-channel PNG, got mode {im.mode}", path)
            return np.array(im, dtype=np.uint8)
    except FormatError:
        raise
    except (OSError, SyntaxError) as exc:
        raise FormatError(f"unreadable PNG: {exc}", path) from exc


def encode_label_map(labels) -> bytes:
    return _png_bytes(as_label_map(labels))


def write_label_map(path, labels) -> None:
    Path(path).write_bytes(encode_label_map(labels))


def read_label_map(path, num_classes: int | None = None) -> np.ndarray:
    arr = _read_gray(path)
    if num_classes is not None:
        bad = (arr > num_classes) & (arr != IGNORE)
        if bad.any():
            raise FormatError(f"label values above {num_classes}", path)
    return arr


def write_saliency(path, saliency) -> None:
    s = np.asarray(saliency, dtype=np.float64)
    if s.ndim != 2 or s.min() < 0 or s.max() > 1:
        raise InvalidArgumentError("saliency must be a 2-D grid in [0, 1]")
    Path(path).write_bytes(_png_bytes(np.rint(s * 255.0).astype(np.uint8)))


def read_saliency(path) -> np.ndarray:
    return _read_gray(path).astype(np.float64) / 255.0


def read_tags(path, num_classes: int) -> dict[str, ImageTags]:
    tags = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            image_id, classes = rec["image"], rec["classes"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise FormatError(f"line {lineno}: bad tag record ({exc})", path) from exc
        tags[image_id] = ImageTags.from_classes(image_id, classes, num_classes)
    return tags


def write_tags(path, tags) -> None:
    lines = [json.dumps({"image": t.image_id, "classes": t.classes}) for t in tags]
    Path(path).write_text("".join(line + "\n" for line in lines))
