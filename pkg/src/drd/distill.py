"""Pixel-wise probability distillation and assembly of the full training
objective from its weighted components."""

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

STUDENT_PROB_FLOOR = 1e-8  # clamp inside the log; teacher zeros contribute 0 * log 0 = 0


@dataclass(frozen=True)
class LossWeights:
    """Coefficients of the distillation terms in the total objective."""

    lambda1: float = 10.0  # pixel probability alignment
    lambda2: float = 0.1   # adversarial term (enters with a minus sign)
    lambda3: float = 25.0  # spatial + channel relation alignment

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class LossToggles:
    """Which distillation terms participate in training. A toggled-off term is
    not computed at all, so it contributes exactly zero to value and gradient."""

    use_lp: bool = True
    use_adv: bool = True
    use_ls: bool = True
    use_lc: bool = True

    @staticmethod
    def none() -> "LossToggles":
        return LossToggles(False, False, False, False)


@dataclass
class LossBreakdown:
    """One training step's loss components and their weighted total.

    total = l_ce + lambda1 * l_p - lambda2 * l_adv + lambda3 * (l_s + l_c).
    Serializes to one row of the training-log CSV.
    """

    l_ce: float
    l_p: float
    l_adv: float
    l_s: float
    l_c: float
    total: float

    CSV_FIELDS = ("l_ce", "l_p", "l_adv", "l_s", "l_c", "total")

    def csv_row(self) -> list[float]:
        return [getattr(self, k) for k in self.CSV_FIELDS]


def _check_finite_scalar(value, name: str):
    v = float(value) if not isinstance(value, torch.Tensor) else value
    if isinstance(v, torch.Tensor):
        if not torch.isfinite(v).all():
            raise ValueError(f"{name} is non-finite")
    elif not math.isfinite(v):
        raise ValueError(f"{name} is non-finite, got {v}")


def total_loss(l_ce, l_p, l_adv, l_s, l_c, weights: LossWeights) -> LossBreakdown:
    """Combine the loss components into the training objective.

    The adversarial term is subtracted: the student is trained to raise the
    discriminator's score on its own output. Accepts floats or 0-dim tensors
    so the same code path serves logging and backprop.
    """
    parts = dict(l_ce=l_ce, l_p=l_p, l_adv=l_adv, l_s=l_s, l_c=l_c)
    for name, v in parts.items():
        _check_finite_scalar(v, name)
    total = (l_ce + weights.lambda1 * l_p - weights.lambda2 * l_adv
             + weights.lambda3 * (l_s + l_c))
    return LossBreakdown(l_ce=l_ce, l_p=l_p, l_adv=l_adv, l_s=l_s, l_c=l_c, total=total)


def _check_score_map(scores: torch.Tensor, name: str) -> bool:
    """Validate a (c, H, W) or (B, c, H, W) score map; returns True if batched."""
    if scores.dim() not in (3, 4):
        raise ValueError(f"{name} must have shape (c, H, W) or (B, c, H, W), got {tuple(scores.shape)}")
    if scores.shape[-3] < 2:
        raise ValueError(f"{name} needs at least 2 classes, got {scores.shape[-3]}")
    return scores.dim() == 4


def softmax_scores(logits: torch.Tensor) -> torch.Tensor:
    """Per-pixel softmax over the class axis (max-subtracted, so overflow-safe)."""
    _check_score_map(logits, "logits")
    if not torch.isfinite(logits).all():
        raise ValueError("logits contain non-finite values")
    return F.softmax(logits, dim=-3)


def pixel_kl_loss(teacher_probs: torch.Tensor, student_probs: torch.Tensor) -> torch.Tensor:
    """Mean over pixels of KL(teacher || student) between class distributions.

    Student probabilities are clamped at 1e-8 inside the log, so the result can
    dip a hair below zero when the maps agree to better than the clamp; exact
    teacher zeros contribute nothing. Differentiable w.r.t. the student.
    """
    _check_score_map(teacher_probs, "teacher_probs")
    _check_score_map(student_probs, "student_probs")
    if teacher_probs.shape != student_probs.shape:
        raise ValueError(
            f"score maps disagree in shape: teacher {tuple(teacher_probs.shape)} vs "
            f"student {tuple(student_probs.shape)}")
    ratio = teacher_probs / student_probs.clamp_min(STUDENT_PROB_FLOOR)
    per_pixel = torch.xlogy(teacher_probs, ratio).sum(dim=-3)  # sum over classes
    return per_pixel.mean()  # mean over pixels (and batch)


def masked_cross_entropy(logits: torch.Tensor, labels: torch.Tensor, ignore_index: int = 255) -> torch.Tensor:
    """Mean negative log-probability of the true class over non-ignored pixels.

    Pixels labeled `ignore_index` contribute neither value nor gradient.
    Raises if every pixel is ignored (the mean would be undefined).
    """
    batched = _check_score_map(logits, "logits")
    x = logits if batched else logits.unsqueeze(0)
    y = labels if batched else labels.unsqueeze(0)
    if y.shape != x.shape[:1] + x.shape[2:]:
        raise ValueError(f"labels shape {tuple(labels.shape)} does not match logits {tuple(logits.shape)}")
    y = y.long()
    kept = y != ignore_index
    if not kept.any():
        raise ValueError("every pixel is ignored; the mean cross-entropy is undefined")
    c = x.shape[1]
    bad = kept & ((y < 0) | (y >= c))
    if bad.any():
        raise ValueError(f"labels must lie in [0, {c}) or equal ignore_index={ignore_index}")
    return F.cross_entropy(x, y, ignore_index=ignore_index)
