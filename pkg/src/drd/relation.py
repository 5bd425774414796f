"""Spatial and channel relation maps over encoder feature maps, and the
mean-squared losses that align a student's maps with a teacher's.

A relation map is a row-stochastic matrix of softmax-normalized dot products:
row i holds the affinity of every pixel (or channel) j with respect to i.
Both map constructors are parameter-free and differentiable, so the alignment
losses backpropagate into the student features.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

# 64x64 grid of positions; an N x N map beyond this does not fit a sane
# training-step memory budget, callers must average-pool first.
DEFAULT_MAX_POSITIONS = 4096
DEFAULT_MAX_CHANNELS = 4096


def _check_feature_map(f: torch.Tensor, name: str) -> bool:
    """Validate a (C, H, W) or (B, C, H, W) feature tensor; returns True if batched."""
    if not isinstance(f, torch.Tensor):
        raise TypeError(f"{name} must be a tensor, got {type(f).__name__}")
    if f.dim() not in (3, 4):
        raise ValueError(f"{name} must have shape (C, H, W) or (B, C, H, W), got {tuple(f.shape)}")
    if min(f.shape) < 1:
        raise ValueError(f"{name} has an empty dimension: {tuple(f.shape)}")
    if not torch.isfinite(f).all():
        raise ValueError(f"{name} contains non-finite values")
    return f.dim() == 4


def spatial_relation(features: torch.Tensor, max_positions: int = DEFAULT_MAX_POSITIONS) -> torch.Tensor:
    """Row-stochastic (N, N) map of pairwise pixel affinities, N = H * W.

    Entry [i, j] is exp(f_j . f_i) normalized over j, where f_i is the feature
    column of pixel i. The softmax subtracts the per-row max before
    exponentiating, which changes nothing mathematically but keeps large dot
    products from overflowing. Accepts (C, H, W) or a batched (B, C, H, W),
    returning (N, N) or (B, N, N) accordingly.
    """
    batched = _check_feature_map(features, "features")
    f = features if batched else features.unsqueeze(0)
    b, c, h, w = f.shape
    n = h * w
    if n > max_positions:
        raise ValueError(
            f"{n} pixel positions exceed the budget of {max_positions}; "
            "average-pool the features first (see adapt_resolution)")
    flat = f.reshape(b, c, n)
    gram = flat.transpose(1, 2) @ flat  # [b, i, j] = f_i . f_j
    out = F.softmax(gram, dim=-1)
    return out if batched else out.squeeze(0)


def channel_relation(features: torch.Tensor, max_channels: int = DEFAULT_MAX_CHANNELS) -> torch.Tensor:
    """Row-stochastic (C, C) map of pairwise channel affinities.

    Entry [i, j] is exp(g_j . g_i) normalized over j, where g_i is channel i's
    feature row across all pixels. Same stability and batching behavior as
    spatial_relation.
    """
    batched = _check_feature_map(features, "features")
    f = features if batched else features.unsqueeze(0)
    b, c, h, w = f.shape
    if c > max_channels:
        raise ValueError(f"{c} channels exceed the budget of {max_channels}")
    flat = f.reshape(b, c, h * w)
    gram = flat @ flat.transpose(1, 2)  # [b, i, j] = g_i . g_j
    out = F.softmax(gram, dim=-1)
    return out if batched else out.squeeze(0)


def _relation_mse(teacher_map: torch.Tensor, student_map: torch.Tensor, kind: str) -> torch.Tensor:
    if teacher_map.shape != student_map.shape:
        raise ValueError(
            f"{kind} relation maps disagree in shape: teacher {tuple(teacher_map.shape)} vs "
            f"student {tuple(student_map.shape)}; align resolutions upstream (adapt_resolution)")
    # mean over every entry, i.e. sum of squared differences / (N*N) per map
    return F.mse_loss(student_map, teacher_map)


def spatial_relation_loss(teacher_map: torch.Tensor, student_map: torch.Tensor) -> torch.Tensor:
    """Mean squared difference over all N*N entries of two spatial relation maps."""
    return _relation_mse(teacher_map, student_map, "spatial")


def channel_relation_loss(teacher_map: torch.Tensor, student_map: torch.Tensor) -> torch.Tensor:
    """Mean squared difference over all C*C entries of two channel relation maps."""
    return _relation_mse(teacher_map, student_map, "channel")


def adapt_resolution(features: torch.Tensor, target_h: int, target_w: int) -> torch.Tensor:
    """Average-pool a feature map down to (target_h, target_w).

    Used to bound relation-map size and to bring teacher and student taps to a
    common spatial resolution before the spatial loss. Pooling to the current
    size is the identity.
    """
    batched = _check_feature_map(features, "features")
    f = features if batched else features.unsqueeze(0)
    h, w = f.shape[-2:]
    if target_h < 1 or target_w < 1:
        raise ValueError(f"target size must be positive, got ({target_h}, {target_w})")
    if target_h > h or target_w > w:
        raise ValueError(f"target ({target_h}, {target_w}) exceeds input ({h}, {w}); only downsampling is supported")
    out = F.adaptive_avg_pool2d(f, (target_h, target_w))
    return out if batched else out.squeeze(0)


class ChannelProjection(nn.Module):
    """Learned 1x1 projection from student tap width to teacher tap width.

    Needed whenever the two encoders end in different channel counts, since the
    channel relation loss compares (C, C) maps entrywise. Trained jointly with
    the student.
    """

    def __init__(self, student_channels: int, teacher_channels: int):
        super().__init__()
        self.proj = nn.Conv2d(student_channels, teacher_channels, 1, bias=False)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return self.proj(features)
