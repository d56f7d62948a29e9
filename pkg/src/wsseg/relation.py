"""Saliency-guided relation losses on the attention map and their analytic gradients.

For a simple image (exactly one tagged class) the binarized saliency map is
taken as the object mask. Prototypes are masked means of the attention map
upsampled to saliency resolution; the distance losses are masked mean
squared deviations from those prototypes at attention resolution; the
class-specific term pushes the present class's object prototype above its
background prototype.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .cam import cls_loss, cls_loss_grad, gap
from .errors import EmptySupportError, InvalidArgumentError
from .grids import (
    as_grid2d,
    as_grid3d,
    binarize,
    invert_mask,
    resize_mask,
    tag_vector,
    upsample_bilinear,
    upsample_bilinear_adjoint,
)

SUPPORT_EPS = 1e-6
TERMS = ("cls", "cad_ob", "cad_bg", "csd")


@dataclass(frozen=True)
class Prototype:
    values: np.ndarray
    support: float


@dataclass(frozen=True)
class LossWeights:
    lambda_ob: float = 0.01
    lambda_bg: float = 0.025
    lambda_csd: float = 0.1

    def __post_init__(self):
        bad = [k for k, v in asdict(self).items() if not v >= 0]
        if bad:
            raise InvalidArgumentError(f"loss weights must be >= 0: {', '.join(bad)}")

    def factor(self, term: str) -> float:
        return {"cls": 1.0, "cad_ob": self.lambda_ob, "cad_bg": self.lambda_bg,
                "csd": self.lambda_csd}[term]


@dataclass(frozen=True)
class LossBreakdown:
    cls: float
    cad_ob: float
    cad_bg: float
    csd: float
    total: float
    simple: bool

    def to_dict(self):
        return asdict(self)


def is_simple(y) -> bool:
    return int(tag_vector(y).sum()) == 1


def masked_prototype(F_up, M) -> Prototype:
    """Masked average pooling of every channel of ``F_up`` under mask ``M``."""
    F_up = as_grid3d(F_up, "F_up")
    M = as_grid2d(M, "M")
    if F_up.shape[1:] != M.shape:
        raise InvalidArgumentError(f"feature size {F_up.shape[1:]} != mask size {M.shape}")
    support = float(M.sum())
    if support <= SUPPORT_EPS:
        raise EmptySupportError(f"mask support {support} <= {SUPPORT_EPS}")
    values = np.tensordot(F_up, M, axes=([1, 2], [0, 1])) / support
    return Prototype(values, support)


def cad_loss(F, M_attn, p: Prototype) -> float:
    F = as_grid3d(F, "F")
    M = as_grid2d(M_attn, "M_attn")
    if F.shape[1:] != M.shape:
        raise InvalidArgumentError(f"feature size {F.shape[1:]} != mask size {M.shape}")
    support = M.sum()
    if support <= SUPPORT_EPS:
        raise EmptySupportError(f"mask support {support} <= {SUPPORT_EPS}")
    D = F - np.asarray(p.values)[:, None, None]
    per_pixel = (D * D).mean(axis=0)
    return float((M * per_pixel).sum() / support)


def csd_loss(p: Prototype, p_bar: Prototype, y) -> float:
    y = tag_vector(y, len(p.values))
    return float(y @ np.asarray(p_bar.values) - y @ np.asarray(p.values))


@dataclass(frozen=True)
class _Masks:
    obj: np.ndarray       # saliency resolution
    bg: np.ndarray
    obj_attn: np.ndarray  # attention resolution
    bg_attn: np.ndarray


def _relation_masks(F, saliency, y, sal_threshold):
    """Masks for the relation terms, or None when they are gated off."""
    if not is_simple(y):
        return None
    M = binarize(saliency, sal_threshold)
    M_attn = resize_mask(M, F.shape[1], F.shape[2])
    masks = _Masks(M, invert_mask(M), M_attn, invert_mask(M_attn))
    if min(m.sum() for m in (masks.obj, masks.bg, masks.obj_attn, masks.bg_attn)) <= SUPPORT_EPS:
        return None
    return masks


def _check_inputs(F, saliency, y):
    F = as_grid3d(F, "F")
    saliency = as_grid2d(saliency, "saliency")
    tag_vector(y, F.shape[0])
    return F, saliency


def loss_terms(F, saliency, y, sal_threshold: float = 0.5) -> tuple[dict, bool]:
    """Unweighted value of every loss term, plus whether relation terms were active."""
    F, saliency = _check_inputs(F, saliency, y)
    terms = {"cls": cls_loss(gap(F), y), "cad_ob": 0.0, "cad_bg": 0.0, "csd": 0.0}
    masks = _relation_masks(F, saliency, y, sal_threshold)
    if masks is None:
        return terms, False
    F_up = upsample_bilinear(F, *saliency.shape)
    p = masked_prototype(F_up, masks.obj)
    p_bar = masked_prototype(F_up, masks.bg)
    terms["cad_ob"] = cad_loss(F, masks.obj_attn, p)
    terms["cad_bg"] = cad_loss(F, masks.bg_attn, p_bar)
    terms["csd"] = csd_loss(p, p_bar, y)
    return terms, True


def total_loss(F, saliency, y, w: LossWeights | None = None,
               sal_threshold: float = 0.5) -> LossBreakdown:
    w = w or LossWeights()
    terms, simple = loss_terms(F, saliency, y, sal_threshold)
    total = terms["cls"]
    if simple:
        total += w.lambda_ob * terms["cad_ob"] + w.lambda_bg * terms["cad_bg"] + w.lambda_csd * terms["csd"]
    return LossBreakdown(total=total, simple=simple, **terms)


def _prototype_jacobian(mask, support, attn_h, attn_w):
    # d p^c / d F^c, identical for every channel: the adjoint of the upsampler applied to M / sum(M)
    return upsample_bilinear_adjoint(mask / support, attn_h, attn_w)


def _cad_grad(F, M_attn, p_values, proto_jac):
    C = F.shape[0]
    D = F - p_values[:, None, None]
    scale = 2.0 / (M_attn.sum() * C)
    grad = scale * M_attn[None] * D
    if proto_jac is not None:
        dp = -scale * (M_attn[None] * D).sum(axis=(1, 2))
        grad = grad + dp[:, None, None] * proto_jac[None]
    return grad


def loss_term_grads(F, saliency, y, sal_threshold: float = 0.5,
                    detach_prototypes: bool = False) -> dict:
    """Gradient of every unweighted loss term with respect to ``F``.

    With ``detach_prototypes`` the prototypes are treated as constants.
    """
    F, saliency = _check_inputs(F, saliency, y)
    C, h, w = F.shape
    yv = tag_vector(y, C)
    zero = np.zeros_like(F)
    grads = {
        "cls": np.broadcast_to(cls_loss_grad(gap(F), yv)[:, None, None] / (h * w), F.shape).copy(),
        "cad_ob": zero,
        "cad_bg": zero.copy(),
        "csd": zero.copy(),
    }
    masks = _relation_masks(F, saliency, y, sal_threshold)
    if masks is None:
        return grads
    F_up = upsample_bilinear(F, *saliency.shape)
    p = masked_prototype(F_up, masks.obj)
    p_bar = masked_prototype(F_up, masks.bg)
    jac = _prototype_jacobian(masks.obj, p.support, h, w)
    jac_bar = _prototype_jacobian(masks.bg, p_bar.support, h, w)
    grads["cad_ob"] = _cad_grad(F, masks.obj_attn, p.values, None if detach_prototypes else jac)
    grads["cad_bg"] = _cad_grad(F, masks.bg_attn, p_bar.values, None if detach_prototypes else jac_bar)
    if not detach_prototypes:
        grads["csd"] = yv[:, None, None] * (jac_bar - jac)[None]
    return grads


def total_loss_grad(F, saliency, y, w: LossWeights | None = None, sal_threshold: float = 0.5,
                    detach_prototypes: bool = False) -> np.ndarray:
    w = w or LossWeights()
    grads = loss_term_grads(F, saliency, y, sal_threshold, detach_prototypes)
    return sum(w.factor(t) * grads[t] for t in TERMS)
