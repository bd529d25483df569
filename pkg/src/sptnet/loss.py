"""Hybrid region + pixel objective with multi-scale supervision.

The pixel term is mean binary cross-entropy, the region term is a soft
intersection-over-union deficit; both are differentiable through the tape.
Each log argument is floored at ``eps`` so a saturated prediction produces a
finite (and, when it matches the label, exactly zero) pixel term; the
floor never binds for predictions inside [eps, 1-eps].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, add, add_scalar, clamp, div, log, mean_all, mul, \
    neg, scale, sub, sum_all

__all__ = ["LossBreakdown", "hybrid_loss", "deep_supervision", "LOG_FLOOR"]

LOG_FLOOR = 1e-7


@dataclass
class LossBreakdown:
    """Scalar loss tensors: the two components, their sum, and the
    per-scale totals when several maps are supervised at once."""

    bce: Tensor
    iou: Tensor
    total: Tensor
    per_scale: list[Tensor] = field(default_factory=list)
    grand_total: Tensor | None = None

    def __post_init__(self):
        if self.grand_total is None:
            self.grand_total = self.total


def _guarded_log(x: Tensor) -> Tensor:
    # the upper bound never binds for probabilities, so gradients pass
    # through everywhere above the floor
    return log(clamp(x, LOG_FLOOR, 2.0))


def _validate(pred: Tensor, gt: Tensor) -> None:
    if pred.shape != gt.shape:
        raise ValueError(
            f"hybrid_loss: prediction {pred.shape} vs target {gt.shape}")
    if np.any(pred.data < 0.0) or np.any(pred.data > 1.0):
        raise ValueError("hybrid_loss: predictions must lie in [0, 1]")
    if not np.all((gt.data == 0.0) | (gt.data == 1.0)):
        raise ValueError("hybrid_loss: targets must be binary")


def hybrid_loss(pred: Tensor, gt: Tensor) -> LossBreakdown:
    """Mean BCE plus IoU deficit for one saliency map against a binary mask.

    A target with empty union (both sides identically zero) scores iou = 0:
    there is no region to miss.
    """
    _validate(pred, gt)
    pos = gt
    neg_gt = Tensor(1.0 - gt.data)

    on = mul(pos, _guarded_log(pred))
    off = mul(neg_gt, _guarded_log(add_scalar(neg(pred), 1.0)))
    bce = scale(mean_all(add(on, off)), -1.0)

    inter = sum_all(mul(pred, pos))
    union = sum_all(sub(add(pred, pos), mul(pred, pos)))
    if union.item() == 0.0:
        iou = Tensor(np.float64(0.0))
    else:
        iou = add_scalar(neg(div(inter, union)), 1.0)

    total = add(bce, iou)
    return LossBreakdown(bce=bce, iou=iou, total=total, per_scale=[total])


def deep_supervision(out, gt: Tensor) -> LossBreakdown:
    """Equal-weight sum of :func:`hybrid_loss` over every predicted map.

    ``out`` may be any sequence of maps or an object exposing ``.maps``.
    """
    maps = getattr(out, "maps", out)
    if len(maps) == 0:
        raise ValueError("deep_supervision: no maps to supervise")
    parts = [hybrid_loss(m, gt) for m in maps]
    bce = parts[0].bce
    iou = parts[0].iou
    for p in parts[1:]:
        bce = add(bce, p.bce)
        iou = add(iou, p.iou)
    total = add(bce, iou)
    return LossBreakdown(bce=bce, iou=iou, total=total,
                         per_scale=[p.total for p in parts],
                         grand_total=total)
