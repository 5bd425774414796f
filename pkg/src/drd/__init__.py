"""Dual-relation knowledge distillation for compact semantic segmentation
models: spatial/channel relation alignment, pixel-probability distillation,
and adversarial output matching, with a full train/evaluate/report harness."""

__version__ = "0.1.0"

from .distill import LossBreakdown, LossToggles, LossWeights
from .models import ModelSpec

__all__ = ["LossBreakdown", "LossToggles", "LossWeights", "ModelSpec", "__version__"]
