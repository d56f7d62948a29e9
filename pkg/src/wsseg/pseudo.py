"""Initial pseudo labels from CAMs + saliency, and object-guided refinement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .grids import IGNORE, as_grid2d, as_grid3d, as_label_map, tag_vector

CONFLICT_POLICIES = ("ignore", "argmax")


@dataclass(frozen=True)
class LabelGenConfig:
    fg_threshold: float = 0.3
    sal_threshold: float = 0.5
    conflict_policy: str = "ignore"

    def __post_init__(self):
        for name in ("fg_threshold", "sal_threshold"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise InvalidArgumentError(f"{name} must lie in (0, 1), got {v}")
        if self.conflict_policy not in CONFLICT_POLICIES:
            raise InvalidArgumentError(
                f"conflict_policy must be one of {CONFLICT_POLICIES}, got {self.conflict_policy!r}")


def generate_initial(A, saliency, y, cfg: LabelGenConfig | None = None) -> np.ndarray:
    """Per-pixel rule table over (best present-class CAM value, saliency).

    ============  ==========  ==========================================
    activated     salient     label
    ============  ==========  ==========================================
    yes           yes         best present class
    no            no          0 (background)
    no            yes         255, or best class under ``argmax`` policy
    yes           no          255
    ============  ==========  ==========================================
    """
    cfg = cfg or LabelGenConfig()
    A = as_grid3d(A, "A")
    s = as_grid2d(saliency, "saliency")
    if A.shape[1:] != s.shape:
        raise InvalidArgumentError(f"CAM size {A.shape[1:]} != saliency size {s.shape}")
    yv = tag_vector(y, A.shape[0])

    present = np.flatnonzero(yv)
    H, W = s.shape
    if present.size:
        sub = A[present]
        best = present[np.argmax(sub, axis=0)] + 1
        v = sub.max(axis=0)
    else:
        best = np.full((H, W), IGNORE)
        v = np.zeros((H, W))

    fg = v >= cfg.fg_threshold
    sal = s >= cfg.sal_threshold
    out = np.full((H, W), IGNORE, dtype=np.uint8)
    out[~fg & ~sal] = 0
    out[fg & sal] = best[fg & sal]
    if cfg.conflict_policy == "argmax":
        case = ~fg & sal
        out[case] = best[case]
    return out


def refine(P, L, y, copy_ignore: bool = True) -> np.ndarray:
    """Correct a segmentation prediction ``P`` with image tags and the initial label ``L``.

    Rules, applied in order on a copy of ``P``:

    1. pixels predicted as a class absent from the tags become 255;
    2. background pixels take ``L``'s value wherever ``L`` is not background
       (a copied class absent from the tags becomes 255; with
       ``copy_ignore=False`` an ignore value in ``L`` is not copied);
    3. if some tagged class is still missing, all remaining background becomes 255.
    """
    yv = tag_vector(y)
    C = yv.shape[0]
    P = as_label_map(P, C, "P")
    L = as_label_map(L, C, "L")
    if P.shape != L.shape:
        raise InvalidArgumentError(f"P shape {P.shape} != L shape {L.shape}")

    # lut[v] is True for labels naming a class absent from the tags
    absent = np.zeros(256, dtype=bool)
    absent[1:C + 1] = yv == 0

    out = P.copy()
    out[absent[out]] = IGNORE

    L_valid = np.where(absent[L], IGNORE, L).astype(np.uint8)
    take = (out == 0) & (L_valid != 0)
    if not copy_ignore:
        take &= L_valid != IGNORE
    out[take] = L_valid[take]

    seen = np.zeros(256, dtype=bool)
    seen[np.unique(out)] = True
    missing = any(not seen[c + 1] for c in np.flatnonzero(yv))
    if missing:
        out[out == 0] = IGNORE
    return out
