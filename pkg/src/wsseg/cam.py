"""Class activation maps, GAP scores and the multi-label soft-margin loss."""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError
from .grids import as_grid3d, tag_vector

CAM_EPS = 1e-12


def gap(F) -> np.ndarray:
    """Global average pooling: one pre-sigmoid score per channel."""
    return as_grid3d(F, "F").mean(axis=(1, 2))


def normalize_cam(F, c: int) -> np.ndarray:
    """ReLU channel ``c`` of ``F`` and divide by its maximum.

    A channel whose maximum is at most ``CAM_EPS`` yields an all-zero map.
    """
    F = as_grid3d(F, "F")
    if not 0 <= c < F.shape[0]:
        raise InvalidArgumentError(f"channel {c} out of range for {F.shape[0]} channels")
    ch = F[c]
    peak = ch.max()
    if peak <= CAM_EPS:
        return np.zeros_like(ch)
    return np.maximum(ch, 0.0) / peak


def normalize_cams(F, y=None) -> np.ndarray:
    """All channels at once; with tags ``y``, absent-class channels are zeroed."""
    F = as_grid3d(F, "F")
    A = np.stack([normalize_cam(F, c) for c in range(F.shape[0])])
    if y is not None:
        A *= tag_vector(y, F.shape[0])[:, None, None]
    return A


def _scores_and_tags(q, y):
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 1 or q.size < 1:
        raise InvalidArgumentError("class scores must be a non-empty 1-D vector")
    return q, tag_vector(y, q.shape[0])


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # exp(-|x|) never overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def cls_loss(q, y) -> float:
    # -log sigma(q) = softplus(-q), -log(1 - sigma(q)) = softplus(q)
    q, y = _scores_and_tags(q, y)
    terms = y * np.logaddexp(0.0, -q) + (1.0 - y) * np.logaddexp(0.0, q)
    return float(terms.mean())


def cls_loss_grad(q, y) -> np.ndarray:
    q, y = _scores_and_tags(q, y)
    return (sigmoid(q) - y) / q.shape[0]
