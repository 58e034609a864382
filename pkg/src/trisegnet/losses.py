"""Training losses: focal Tversky for the supervised stage, mixed
boundary+overlap for the pseudo-label stages. All operate on soft prediction
maps in [0,1] against hard targets, reduce over the trailing two (spatial)
dims, and average any leading batch dims.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

_GRAD_EPS = 1.0e-6


@dataclass(frozen=True)
class TverskyParams:
    alpha: float = 0.7
    beta: float = 0.3
    gamma: float = 4.0 / 3.0
    eps: float = 1.0e-6

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError(f"alpha and beta must be >= 0, got {self.alpha}, {self.beta}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.eps <= 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")


def _as_map(x) -> torch.Tensor:
    t = x if isinstance(x, torch.Tensor) else torch.as_tensor(x)
    if t.dim() < 2:
        raise ValueError(f"expected a (..., H, W) map, got shape {tuple(t.shape)}")
    return t


def focal_tversky_loss(pred, gt, params: TverskyParams = TverskyParams()) -> torch.Tensor:
    """(1 - (TP+eps)/(TP + a*FN + b*FP + eps))**gamma with soft counts."""
    pred, gt = _as_map(pred), _as_map(gt)
    tp = (pred * gt).sum(dim=(-2, -1))
    fn = ((1.0 - pred) * gt).sum(dim=(-2, -1))
    fp = (pred * (1.0 - gt)).sum(dim=(-2, -1))
    tv = 1.0 - (tp + params.eps) / (tp + params.alpha * fn + params.beta * fp + params.eps)
    return tv.clamp_min(0.0).pow(params.gamma).mean()


def spatial_gradient(pred) -> tuple[torch.Tensor, torch.Tensor]:
    """Forward differences, zero at the trailing row/column."""
    pred = _as_map(pred)
    gx = torch.zeros_like(pred)
    gy = torch.zeros_like(pred)
    gx[..., :, :-1] = pred[..., :, 1:] - pred[..., :, :-1]
    gy[..., :-1, :] = pred[..., 1:, :] - pred[..., :-1, :]
    return gx, gy


def boundary_loss(pred, literal_form: bool = False) -> torch.Tensor:
    """Length-style penalty on the prediction's spatial gradient.

    Default is the gradient-magnitude form sum(sqrt(gx^2 + gy^2 + 1e-6)).
    literal_form=True sums sqrt(|gx + gy + 1e-6|) instead; the two components
    can cancel there, so it is kept only for comparison runs.
    """
    gx, gy = spatial_gradient(pred)
    if literal_form:
        per_pixel = (gx + gy + _GRAD_EPS).abs().sqrt()
    else:
        per_pixel = (gx * gx + gy * gy + _GRAD_EPS).sqrt()
    return per_pixel.sum(dim=(-2, -1)).mean()


def overlap_loss(pred, gt) -> torch.Tensor:
    """sum P*(1-G)^2 + sum (1-P)*G^2 — prediction mass off-target, both ways."""
    pred, gt = _as_map(pred), _as_map(gt)
    bg = (pred * (1.0 - gt).pow(2)).sum(dim=(-2, -1))
    fg = ((1.0 - pred) * gt.pow(2)).sum(dim=(-2, -1))
    return (bg + fg).mean()


def stage23_loss(pred, gt, literal_boundary: bool = False, overlap_weight: float = 1.0) -> torch.Tensor:
    """Boundary term plus overlap term; the bare sum unless overlap_weight set."""
    return boundary_loss(pred, literal_form=literal_boundary) + overlap_weight * overlap_loss(pred, gt)
