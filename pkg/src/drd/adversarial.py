"""Conditional discriminator over (image, segmentation map) pairs and the
alternating update that trains it against the student.

The discriminator scores how plausible a probability map looks for a given
image. It is trained to score student maps low relative to teacher maps
(Wasserstein-style difference with a gradient penalty), while the student's
objective subtracts the scored term, pushing its maps toward the teacher's.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn

from .distill import (LossBreakdown, LossToggles, LossWeights, masked_cross_entropy,
                      pixel_kl_loss, softmax_scores, total_loss)
from .relation import (ChannelProjection, adapt_resolution, channel_relation,
                       channel_relation_loss, spatial_relation, spatial_relation_loss)

GRADIENT_PENALTY_WEIGHT = 10.0
TAP_POOL_LIMIT = 64  # relation maps see at most 64x64 = 4096 positions


@dataclass(frozen=True)
class DiscriminatorSpec:
    """Architecture of the conditional discriminator: a stack of strided
    convolutions ending in a global-average scalar head. No normalization
    layers, as usual for gradient-penalty critics."""

    conv_widths: tuple = (64, 128, 256, 512)
    downsample_stride: int = 2
    leaky_slope: float = 0.2

    def __post_init__(self):
        if len(self.conv_widths) < 2:
            raise ValueError("discriminator needs at least 2 conv stages")
        if self.downsample_stride < 1:
            raise ValueError("downsample_stride must be >= 1")


class Discriminator(nn.Module):
    """Scores an (image, probability map) pair with a single real number.

    The probability map is concatenated channel-wise with the raw image, so
    the score conditions on both. Deterministic in evaluation mode (it is
    deterministic in training mode too; there is no dropout or batch norm).
    """

    def __init__(self, image_bands: int, num_classes: int, spec: DiscriminatorSpec = DiscriminatorSpec()):
        super().__init__()
        self.image_bands = image_bands
        self.num_classes = num_classes
        layers = []
        in_ch = image_bands + num_classes
        for width in spec.conv_widths:
            layers += [
                nn.Conv2d(in_ch, width, 3, stride=spec.downsample_stride, padding=1),
                nn.LeakyReLU(spec.leaky_slope, inplace=True),
            ]
            in_ch = width
        self.stages = nn.Sequential(*layers)
        self.head = nn.Conv2d(in_ch, 1, 1)

    def forward(self, image: torch.Tensor, score_map: torch.Tensor) -> torch.Tensor:
        if image.shape[-2:] != score_map.shape[-2:]:
            raise ValueError(
                f"image {tuple(image.shape[-2:])} and score map {tuple(score_map.shape[-2:])} "
                "disagree in spatial size; upsample the score map to image resolution")
        if image.dim() != 4 or score_map.dim() != 4:
            raise ValueError("discriminator expects batched (B, C, H, W) inputs")
        x = torch.cat([image, score_map], dim=1)
        return self.head(self.stages(x)).mean(dim=(1, 2, 3))


def discriminator_loss(score_student: torch.Tensor, score_teacher: torch.Tensor) -> torch.Tensor:
    """Batch-mean student score minus batch-mean teacher score. Minimizing this
    drives the discriminator to rate teacher maps above student maps."""
    return score_student.mean() - score_teacher.mean()


def adversarial_term(score_student: torch.Tensor) -> torch.Tensor:
    """Batch-mean discriminator score of student maps; it enters the total
    objective with a negative coefficient, so the student raises it."""
    return score_student.mean()


def interpolated_gradient_norms(discriminator: Discriminator, image: torch.Tensor,
                                teacher_probs: torch.Tensor, student_probs: torch.Tensor,
                                generator: torch.Generator | None = None) -> torch.Tensor:
    """Norms of d(score)/d(map) at random interpolates between the two maps.

    This is the quantity the gradient penalty regularizes toward 1; exposed
    separately so training stability can be measured directly.
    """
    eps = torch.rand((image.shape[0], 1, 1, 1), generator=generator, dtype=teacher_probs.dtype)
    mixed = (eps * teacher_probs + (1.0 - eps) * student_probs).detach().requires_grad_(True)
    scores = discriminator(image, mixed)
    grads = torch.autograd.grad(scores.sum(), mixed, create_graph=True)[0]
    return grads.flatten(1).norm(dim=1)


def gradient_penalty(discriminator: Discriminator, image: torch.Tensor,
                     teacher_probs: torch.Tensor, student_probs: torch.Tensor,
                     generator: torch.Generator | None = None) -> torch.Tensor:
    norms = interpolated_gradient_norms(discriminator, image, teacher_probs, student_probs, generator)
    return ((norms - 1.0) ** 2).mean()


def param_checksum(model: nn.Module) -> float:
    """Cheap order-stable checksum of all parameters, for frozen-model asserts."""
    with torch.no_grad():
        return float(sum(p.double().sum().item() for p in model.parameters()))


def _set_requires_grad(model: nn.Module, flag: bool):
    for p in model.parameters():
        p.requires_grad_(flag)


def _to_float(value) -> float:
    return value.detach().item() if isinstance(value, torch.Tensor) else float(value)


def _raise_if_non_finite(values: dict, step_kind: str):
    as_floats = {k: _to_float(v) for k, v in values.items()}
    bad = {k: v for k, v in as_floats.items() if not torch.isfinite(torch.tensor(v))}
    if bad:
        raise RuntimeError(f"non-finite loss during {step_kind} step, aborting: {bad} "
                           f"(all components: {as_floats})")


def alternating_step(batch, teacher: nn.Module, student: nn.Module,
                     discriminator: Discriminator | None, optimizers: dict,
                     weights: LossWeights, toggles: LossToggles = LossToggles(),
                     projector: ChannelProjection | None = None,
                     ignore_index: int = 255,
                     gp_weight: float = GRADIENT_PENALTY_WEIGHT,
                     tap_pool_limit: int = TAP_POOL_LIMIT,
                     noise_generator: torch.Generator | None = None) -> tuple[LossBreakdown, float]:
    """One discriminator update followed by one student update.

    `batch` is an (images, labels) pair. The teacher is forced into eval mode
    and never updated; this is asserted by checksumming its parameters around
    the step. Toggled-off loss terms are skipped entirely (logged as exact
    zeros), so with the adversarial term disabled the discriminator is neither
    queried nor updated and the step degrades to plain supervised training
    plus the enabled distillation terms.

    Returns the student's loss breakdown (as floats) and the discriminator
    loss value (0.0 when the adversarial term is off).
    """
    images, labels = batch
    teacher.eval()
    checksum_before = param_checksum(teacher)

    adv_active = toggles.use_adv and weights.lambda2 > 0
    if adv_active and (discriminator is None or "discriminator" not in optimizers):
        raise ValueError("adversarial term enabled but no discriminator/optimizer supplied")

    with torch.no_grad():
        t_out = teacher(images)
    s_out = student(images)
    s_logits = s_out["logits"]
    for name, tensor in (("teacher logits", t_out["logits"]), ("student logits", s_logits)):
        if not torch.isfinite(tensor).all():
            raise RuntimeError(f"non-finite {name}; aborting the step "
                               "(inputs or parameters have diverged)")
    with torch.no_grad():
        t_probs = softmax_scores(t_out["logits"])

    # discriminator update (Wasserstein difference + gradient penalty)
    l_d_value = 0.0
    if adv_active:
        _set_requires_grad(discriminator, True)
        optimizers["discriminator"].zero_grad(set_to_none=True)
        s_probs_frozen = softmax_scores(s_logits).detach()
        l_d = discriminator_loss(discriminator(images, s_probs_frozen),
                                 discriminator(images, t_probs))
        gp = gradient_penalty(discriminator, images, t_probs, s_probs_frozen, noise_generator)
        _raise_if_non_finite({"l_d": l_d, "gradient_penalty": gp}, "discriminator")
        (l_d + gp_weight * gp).backward()
        optimizers["discriminator"].step()
        l_d_value = _to_float(l_d)

    # student update
    optimizers["student"].zero_grad(set_to_none=True)
    l_ce = masked_cross_entropy(s_logits, labels, ignore_index=ignore_index)
    zero = s_logits.new_zeros(())
    l_p = l_adv = l_s = l_c = zero
    s_probs = softmax_scores(s_logits) if (toggles.use_lp or adv_active) else None

    if toggles.use_lp:
        l_p = pixel_kl_loss(t_probs, s_probs)

    if adv_active:
        _set_requires_grad(discriminator, False)
        l_adv = adversarial_term(discriminator(images, s_probs))

    if toggles.use_ls or toggles.use_lc:
        t_tap, s_tap = t_out["tap"], s_out["tap"]
        pool_h = min(t_tap.shape[-2], s_tap.shape[-2], tap_pool_limit)
        pool_w = min(t_tap.shape[-1], s_tap.shape[-1], tap_pool_limit)
        t_tap = adapt_resolution(t_tap, pool_h, pool_w)
        s_tap = adapt_resolution(s_tap, pool_h, pool_w)
        if toggles.use_ls:
            l_s = spatial_relation_loss(spatial_relation(t_tap), spatial_relation(s_tap))
        if toggles.use_lc:
            s_tap_c = s_tap
            if s_tap.shape[1] != t_tap.shape[1]:
                if projector is None:
                    raise ValueError(
                        f"channel relation loss needs equal widths (teacher {t_tap.shape[1]} vs "
                        f"student {s_tap.shape[1]}); supply a ChannelProjection")
                s_tap_c = projector(s_tap)
            l_c = channel_relation_loss(channel_relation(t_tap), channel_relation(s_tap_c))

    objective = total_loss(l_ce, l_p, l_adv, l_s, l_c, weights)
    _raise_if_non_finite(
        {"l_ce": l_ce, "l_p": l_p, "l_adv": l_adv, "l_s": l_s, "l_c": l_c, "total": objective.total},
        "student")
    objective.total.backward()
    optimizers["student"].step()
    if adv_active:
        _set_requires_grad(discriminator, True)

    checksum_after = param_checksum(teacher)
    if checksum_after != checksum_before:
        raise RuntimeError(
            f"teacher parameters changed during the step: checksum {checksum_before!r} -> {checksum_after!r}")

    breakdown = total_loss(_to_float(l_ce), _to_float(l_p), _to_float(l_adv), _to_float(l_s), _to_float(l_c), weights)
    return breakdown, l_d_value
