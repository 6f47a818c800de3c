"""Training losses: dice score loss, masked closed-form IoU loss, angle loss,
character cross-entropy, and their weighted sum.

The IoU inside the geometry loss uses the axis-aligned closed form in the
box's own rotated frame (the four distances are frame-relative), so it is
exact for boxes sharing a pixel and an orientation.  Raw IoU is turned into
``-log IoU`` so that a minimizer drives it toward perfect overlap, and the
character term is standard negative log-likelihood; both choices are the
conventional forms of the formulas these equations abbreviate.

Stabilizers: the dice denominator carries +1e-6; IoU ratios and class
probabilities are clamped to >= 1e-6 before the log (clamping, not adding,
so exact reference values like log 3 and log 37 are reproduced).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

EPS = 1e-6


@dataclass
class LossWeights:
    lambda_g: float = 1.0
    lambda_c: float = 1.0
    lambda_a: float = 10.0

    def __post_init__(self):
        if min(self.lambda_g, self.lambda_c, self.lambda_a) < 0:
            raise ValueError("loss weights must be >= 0")


@dataclass
class DenseTargetBatch:
    """Batched supervision maps: score (B,1,h,w), distances (B,4,h,w) in
    top/right/bottom/left order, orientation (B,2,h,w) as (sin, cos), and the
    positive-pixel mask (B,1,h,w)."""

    score: torch.Tensor
    distances: torch.Tensor
    orientation: torch.Tensor
    mask: torch.Tensor


@dataclass
class LossBreakdown:
    total: torch.Tensor
    score: torch.Tensor
    geometry: torch.Tensor
    iou: torch.Tensor
    angle: torch.Tensor
    char: torch.Tensor
    n_positive: int

    def to_log(self, step: int) -> dict:
        return {
            "step": step,
            "total": float(self.total),
            "l_s": float(self.score),
            "l_iou": float(self.iou),
            "l_a": float(self.angle),
            "l_c": float(self.char),
        }


def dice_loss(pred_score: torch.Tensor, gt_score: torch.Tensor) -> torch.Tensor:
    if pred_score.shape != gt_score.shape:
        raise ValueError(f"shape mismatch: {tuple(pred_score.shape)} vs {tuple(gt_score.shape)}")
    inter = (pred_score * gt_score).sum()
    return 1.0 - 2.0 * inter / (pred_score.sum() + gt_score.sum() + EPS)


def _masked_mean(values: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    n = mask.sum()
    if n.item() == 0:
        return values.sum() * 0.0
    return (values * mask).sum() / n


def iou_loss(pred_distances: torch.Tensor, gt_distances: torch.Tensor,
             mask: torch.Tensor) -> torch.Tensor:
    """Mean of -log IoU over the positive mask; 0 when the mask is empty
    (callers can read the positive count off the mask)."""
    pt, pr, pb, pl = pred_distances.unbind(-3)
    gt, gr, gb, gl = gt_distances.unbind(-3)
    inter_h = torch.minimum(pt, gt) + torch.minimum(pb, gb)
    inter_w = torch.minimum(pl, gl) + torch.minimum(pr, gr)
    inter = inter_h * inter_w
    area_p = (pt + pb) * (pl + pr)
    area_g = (gt + gb) * (gl + gr)
    union = (area_p + area_g - inter).clamp(min=EPS)
    iou = (inter / union).clamp(min=EPS)
    return _masked_mean(-torch.log(iou), mask.squeeze(-3))


def angle_loss(pred_orientation: torch.Tensor, gt_orientation: torch.Tensor,
               mask: torch.Tensor) -> torch.Tensor:
    """Mean of 1 - cos(angle difference) over the mask, computed from the
    (sin, cos) channels as 1 - (s*s' + c*c')."""
    cos_diff = (pred_orientation * gt_orientation).sum(dim=-3)
    return _masked_mean(1.0 - cos_diff, mask.squeeze(-3))


def char_ce_loss(pred_probs: torch.Tensor, gt_indices: torch.Tensor) -> torch.Tensor:
    """Mean negative log-likelihood of the true class over all 88 positions.

    ``pred_probs`` is (..., 2, 44, 37) post-softmax; ``gt_indices`` is the
    matching (..., 88) class-index vector.
    """
    if int(gt_indices.min()) < 0 or int(gt_indices.max()) >= pred_probs.shape[-1]:
        raise ValueError("class index out of range")
    flat = pred_probs.reshape(*pred_probs.shape[:-3], 88, pred_probs.shape[-1])
    true_p = torch.gather(flat, -1, gt_indices.long().unsqueeze(-1)).squeeze(-1)
    return -torch.log(true_p.clamp(min=EPS)).mean()


def total_loss(det_out, rec_probs: torch.Tensor | None, targets: DenseTargetBatch,
               gt_indices: torch.Tensor | None, weights: LossWeights) -> LossBreakdown:
    """Weighted sum: score + lambda_g * (iou + lambda_a * angle) + lambda_c * char."""
    l_s = dice_loss(det_out.score, targets.score)
    l_iou = iou_loss(det_out.distances, targets.distances, targets.mask)
    l_a = angle_loss(det_out.orientation, targets.orientation, targets.mask)
    l_g = l_iou + weights.lambda_a * l_a
    if rec_probs is not None and gt_indices is not None and weights.lambda_c > 0:
        l_c = char_ce_loss(rec_probs, gt_indices)
    else:
        l_c = l_s.detach() * 0.0
    total = l_s + weights.lambda_g * l_g + weights.lambda_c * l_c
    return LossBreakdown(total, l_s, l_g, l_iou, l_a, l_c, int(targets.mask.sum()))
