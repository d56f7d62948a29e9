"""Weakly supervised segmentation label pipeline.

Saliency-guided relation losses with analytic gradients, CAM pseudo labels,
object-guided label refinement and mIoU evaluation.
"""

from .cam import cls_loss, cls_loss_grad, gap, normalize_cam, normalize_cams
from .errors import EmptySupportError, FormatError, InvalidArgumentError, UndefinedMetricError
from .grids import (
    IGNORE, ImageTags, binarize, invert_mask, resize_mask, upsample_bilinear,
)
from .metrics import ConfusionMatrix, accumulate, miou
from .pseudo import LabelGenConfig, generate_initial, refine
from .relation import (
    LossBreakdown, LossWeights, Prototype, cad_loss, csd_loss, is_simple, masked_prototype,
    total_loss, total_loss_grad,
)

__version__ = "0.1.0"
