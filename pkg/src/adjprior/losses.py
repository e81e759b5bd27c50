"""Soft Dice + cross-entropy segmentation loss, the regularized total, and their gradients.

All gradient functions return dense ``(h, w, d, C)`` arrays in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from adjprior.adjacency import WEIGHTINGS, PriorAdj, nonadj_grad_array, nonadj_loss_array
from adjprior.validation import ValidationError, check_same_grid
from adjprior.volumes import LogitMap, ProbMap, softmax_array

COMBINE_MODES = ("sum", "product")


@dataclass(frozen=True)
class LossConfig:
    lam: float = 0.3
    dice_eps: float = 1e-5
    ce_eps: float = 1e-12
    combine_mode: str = "sum"
    weighting: str = "support"

    def __post_init__(self):
        if not math.isfinite(self.lam) or self.lam < 0:
            raise ValidationError(f"lambda={self.lam} must be finite and >= 0")
        if not self.dice_eps > 0 or not self.ce_eps > 0:
            raise ValidationError("dice_eps and ce_eps must be > 0")
        if self.combine_mode not in COMBINE_MODES:
            raise ValidationError(
                f"combine_mode={self.combine_mode!r} not in {COMBINE_MODES}"
            )
        if self.weighting not in WEIGHTINGS:
            raise ValidationError(f"weighting={self.weighting!r} not in {WEIGHTINGS}")


def _check_pair(p: ProbMap, g: ProbMap):
    check_same_grid(p, g, spacing=False)
    if p.num_classes != g.num_classes:
        raise ValidationError(f"class count mismatch: {p.num_classes} vs {g.num_classes}")


# --- array-level kernels -------------------------------------------------
# These take raw float arrays so the gradient checker can perturb entries
# without the ProbMap invariants getting in the way.

def dice_parts(p: np.ndarray, g: np.ndarray, eps: float):
    axes = (0, 1, 2)
    num = 2.0 * np.sum(p * g, axis=axes) + eps
    den = np.sum(p * p, axis=axes) + np.sum(g * g, axis=axes) + eps
    return num, den


def dice_value(p, g, eps):
    num, den = dice_parts(p, g, eps)
    return float(1.0 - np.mean(num / den))


def dice_grad(p, g, eps):
    num, den = dice_parts(p, g, eps)
    c = p.shape[-1]
    return -(2.0 * g / den - num * 2.0 * p / den**2) / c


def ce_value(p, g, eps):
    n_vox = p.shape[0] * p.shape[1] * p.shape[2]
    p_true = np.sum(p * g, axis=-1)
    # + 0.0 turns the -0.0 of a perfect prediction into 0.0
    return float(-np.sum(np.log(np.clip(p_true, eps, 1.0))) / n_vox) + 0.0


def ce_grad(p, g, eps):
    n_vox = p.shape[0] * p.shape[1] * p.shape[2]
    p_true = np.sum(p * g, axis=-1, keepdims=True)
    live = (p_true >= eps) & (p_true <= 1.0)
    safe = np.where(live, p_true, 1.0)
    return np.where(live, -g / (n_vox * safe), 0.0)


def loss_terms(p, g, weights, cfg: LossConfig) -> dict:
    """Every scalar term of the objective for raw arrays."""
    dice = dice_value(p, g, cfg.dice_eps)
    ce = ce_value(p, g, cfg.ce_eps)
    seg = dice + ce if cfg.combine_mode == "sum" else dice * ce
    nonadj = nonadj_loss_array(p, weights) if weights is not None else 0.0
    return {
        "total": seg + cfg.lam * nonadj,
        "seg": seg,
        "dice": dice,
        "ce": ce,
        "nonadj": nonadj,
    }


def seg_grad_array(p, g, cfg: LossConfig) -> np.ndarray:
    gd = dice_grad(p, g, cfg.dice_eps)
    gc = ce_grad(p, g, cfg.ce_eps)
    if cfg.combine_mode == "sum":
        return gd + gc
    return gd * ce_value(p, g, cfg.ce_eps) + dice_value(p, g, cfg.dice_eps) * gc


def total_grad_array(p, g, weights, cfg: LossConfig) -> np.ndarray:
    grad = seg_grad_array(p, g, cfg)
    if weights is not None and cfg.lam != 0:
        grad = grad + cfg.lam * nonadj_grad_array(p, weights)
    return grad


def softmax_backward(p: np.ndarray, grad_p: np.ndarray) -> np.ndarray:
    """Pull a probability-space gradient back through the per-voxel softmax."""
    inner = np.sum(p * grad_p, axis=-1, keepdims=True)
    return p * (grad_p - inner)


# --- public operations ---------------------------------------------------

def soft_dice_loss(p: ProbMap, g: ProbMap, cfg: LossConfig = LossConfig()) -> float:
    """Smoothed soft Dice loss averaged over every class channel, background included."""
    _check_pair(p, g)
    return dice_value(p.values, g.values, cfg.dice_eps)


def cross_entropy_loss(p: ProbMap, g: ProbMap, cfg: LossConfig = LossConfig()) -> float:
    _check_pair(p, g)
    return ce_value(p.values, g.values, cfg.ce_eps)


def seg_loss(p: ProbMap, g: ProbMap, cfg: LossConfig = LossConfig()) -> float:
    _check_pair(p, g)
    return loss_terms(p.values, g.values, None, cfg)["seg"]


def _weights(p, A: PriorAdj, cfg: LossConfig):
    if A.num_classes != p.num_classes:
        raise ValidationError(
            f"class count mismatch: prediction has {p.num_classes}, prior has {A.num_classes}"
        )
    return A.penalty_weights(cfg.weighting)


def total_loss(p: ProbMap, g: ProbMap, A: PriorAdj, cfg: LossConfig = LossConfig()) -> float:
    _check_pair(p, g)
    return loss_terms(p.values, g.values, _weights(p, A, cfg), cfg)["total"]


def total_loss_grad(p: ProbMap, g: ProbMap, A: PriorAdj, cfg: LossConfig = LossConfig()) -> np.ndarray:
    _check_pair(p, g)
    return total_grad_array(p.values, g.values, _weights(p, A, cfg), cfg)


def total_loss_grad_logits(
    z: LogitMap, g: ProbMap, A: PriorAdj, cfg: LossConfig = LossConfig()
) -> np.ndarray:
    """Gradient of ``total_loss(softmax(z), g, A)`` with respect to the logits."""
    _check_pair(z, g)
    p = softmax_array(z.values)
    grad_p = total_grad_array(p, g.values, _weights(z, A, cfg), cfg)
    return softmax_backward(p, grad_p)
