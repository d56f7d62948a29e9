"""Dense grid helpers: validation, resampling and binary mask algebra.

Grids are plain numpy arrays. A 2-D grid is ``(H, W)``, a 3-D grid is
``(C, H, W)`` (channel-major), label maps are ``uint8`` ``(H, W)``.
All computation is float64; nothing here mutates its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

IGNORE = 255


def as_grid2d(a, name="grid") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise InvalidArgumentError(f"{name} must be a non-empty 2-D grid, got shape {a.shape}")
    return a


def as_grid3d(a, name="grid") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 3 or min(a.shape) < 1:
        raise InvalidArgumentError(f"{name} must be a non-empty (C, H, W) grid, got shape {a.shape}")
    return a


def as_label_map(a, num_classes: int | None = None, name="label map") -> np.ndarray:
    """Validate a label map: integer values in ``0..C`` or 255."""
    arr = np.asarray(a)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidArgumentError(f"{name} must be a non-empty 2-D map, got shape {arr.shape}")
    if arr.dtype.kind not in "iub":
        if not np.all(np.mod(arr, 1) == 0):
            raise InvalidArgumentError(f"{name} must hold integer labels")
    if arr.size and (arr.min() < 0 or arr.max() > IGNORE):
        raise InvalidArgumentError(f"{name} has values outside 0..255")
    arr = arr.astype(np.uint8)
    if num_classes is not None:
        bad = (arr > num_classes) & (arr != IGNORE)
        if bad.any():
            raise InvalidArgumentError(
                f"{name} has labels above num_classes={num_classes}: {sorted(set(arr[bad].tolist()))}"
            )
    return arr


def _check_target(target_h, target_w):
    if int(target_h) < 1 or int(target_w) < 1:
        raise InvalidArgumentError(f"target size must be >= 1, got {target_h}x{target_w}")
    return int(target_h), int(target_w)


def bilinear_weights(src: int, dst: int) -> np.ndarray:
    """``(dst, src)`` matrix of 1-D corner-aligned linear interpolation weights.

    Output sample ``i`` sits at source coordinate ``i * (src - 1) / (dst - 1)``;
    ``dst == 1`` maps to source index 0.
    """
    w = np.zeros((dst, src))
    if dst == 1 or src == 1:
        w[:, 0] = 1.0
        return w
    x = np.arange(dst) * (src - 1) / (dst - 1)
    lo = np.clip(np.floor(x).astype(int), 0, src - 2)
    frac = x - lo
    rows = np.arange(dst)
    w[rows, lo] = 1.0 - frac
    w[rows, lo + 1] += frac
    return w


def upsample_bilinear(src, target_h: int, target_w: int) -> np.ndarray:
    """Corner-aligned bilinear resample of a 2-D grid (or each channel of a 3-D grid)."""
    target_h, target_w = _check_target(target_h, target_w)
    a = np.asarray(src, dtype=np.float64)
    if a.ndim == 3:
        a = as_grid3d(a, "src")
    else:
        a = as_grid2d(a, "src")
    wy = bilinear_weights(a.shape[-2], target_h)
    wx = bilinear_weights(a.shape[-1], target_w)
    return wy @ a @ wx.T


def upsample_bilinear_adjoint(grad_out, src_h: int, src_w: int) -> np.ndarray:
    """Transpose of :func:`upsample_bilinear`; maps output-space gradients back to the source grid."""
    g = np.asarray(grad_out, dtype=np.float64)
    wy = bilinear_weights(src_h, g.shape[-2])
    wx = bilinear_weights(src_w, g.shape[-1])
    return wy.T @ g @ wx


def area_weights(src: int, dst: int) -> np.ndarray:
    # Row i averages source cells overlapping [i*src/dst, (i+1)*src/dst).
    edges = np.arange(dst + 1) * (src / dst)
    lo, hi = edges[:-1, None], edges[1:, None]
    cells = np.arange(src)[None, :]
    overlap = np.clip(np.minimum(hi, cells + 1) - np.maximum(lo, cells), 0.0, None)
    return overlap / overlap.sum(axis=1, keepdims=True)


# Area averages built from fractional weights can land a hair under an exact 0.5 tie.
_TIE_TOL = 1e-9


def resize_mask(mask, target_h: int, target_w: int) -> np.ndarray:
    """Area-average a [0,1] mask to a new size, then threshold at 0.5 (ties go to 1)."""
    target_h, target_w = _check_target(target_h, target_w)
    m = as_grid2d(mask, "mask")
    if m.min() < 0.0 or m.max() > 1.0:
        raise InvalidArgumentError("mask values must lie in [0, 1]")
    avg = area_weights(m.shape[0], target_h) @ m @ area_weights(m.shape[1], target_w).T
    return (avg >= 0.5 - _TIE_TOL).astype(np.float64)


def is_binary(mask) -> bool:
    m = np.asarray(mask)
    return bool(np.all((m == 0) | (m == 1)))


def invert_mask(mask) -> np.ndarray:
    m = as_grid2d(mask, "mask")
    if not is_binary(m):
        raise InvalidArgumentError("invert_mask expects a binary mask")
    return 1.0 - m


def binarize(saliency, threshold: float) -> np.ndarray:
    if not 0.0 < threshold < 1.0:
        raise InvalidArgumentError(f"threshold must lie in (0, 1), got {threshold}")
    s = as_grid2d(saliency, "saliency")
    return (s >= threshold).astype(np.float64)


@dataclass(frozen=True)
class ImageTags:
    """Image-level labels: a 0/1 presence flag per foreground class (class k at index k-1)."""

    image_id: str
    present: tuple

    @classmethod
    def from_classes(cls, image_id, classes, num_classes):
        classes = [int(c) for c in classes]
        for c in classes:
            if not 1 <= c <= num_classes:
                raise InvalidArgumentError(f"{image_id}: class {c} outside 1..{num_classes}")
        flags = [0] * num_classes
        for c in classes:
            flags[c - 1] = 1
        return cls(image_id, tuple(flags))

    @property
    def num_classes(self) -> int:
        return len(self.present)

    @property
    def y(self) -> np.ndarray:
        return np.asarray(self.present, dtype=np.float64)

    @property
    def classes(self) -> list[int]:
        return [k + 1 for k, v in enumerate(self.present) if v]


def tag_vector(y, num_classes: int | None = None) -> np.ndarray:
    """Accept ImageTags or a raw 0/1 sequence and return a float presence vector."""
    v = y.y if isinstance(y, ImageTags) else np.asarray(y, dtype=np.float64)
    if v.ndim != 1 or not np.all((v == 0) | (v == 1)):
        raise InvalidArgumentError("tags must be a 1-D 0/1 vector")
    if num_classes is not None and v.shape[0] != num_classes:
        raise InvalidArgumentError(f"tag length {v.shape[0]} != {num_classes} classes")
    return v
