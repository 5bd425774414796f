"""Segmentation network factory (pyramid-pooling ResNet family plus a desk-scale
tiny CNN) and parameter / FLOP accounting."""

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F

BACKBONES = ("resnet101", "resnet18", "resnet18_half", "tiny_cnn")
HEADS = ("ppm", "none")

# layer counts per residual stage
_RESNET_LAYERS = {"resnet101": (3, 4, 23, 3), "resnet18": (2, 2, 2, 2)}


@dataclass(frozen=True)
class ModelSpec:
    backbone: str
    num_classes: int
    head: str = "ppm"
    width_multiplier: float = 1.0
    pretrained_path: str | None = None

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ValueError(f"unknown backbone {self.backbone!r}, expected one of {BACKBONES}")
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}, expected one of {HEADS}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if not 0.0 < self.width_multiplier <= 1.0:
            raise ValueError("width_multiplier must be in (0, 1]")


@dataclass
class ModelReport:
    params_millions: float
    flops_giga: float
    input_hw: tuple[int, int]
    tap_shape: tuple[int, int, int]

    def to_json(self) -> str:
        d = dict(self.__dict__)
        d["input_hw"] = list(self.input_hw)
        d["tap_shape"] = list(self.tap_shape)
        return json.dumps(d, indent=2)


def _width(channels: int, multiplier: float) -> int:
    return max(1, int(round(channels * multiplier)))


class BasicBlock(nn.Module):
    expansion = 1

    def __init__(self, inplanes, planes, stride=1, dilation=1, downsample=None):
        super().__init__()
        self.conv1 = nn.Conv2d(inplanes, planes, 3, stride=stride, padding=dilation,
                               dilation=dilation, bias=False)
        self.bn1 = nn.BatchNorm2d(planes)
        self.conv2 = nn.Conv2d(planes, planes, 3, padding=dilation, dilation=dilation, bias=False)
        self.bn2 = nn.BatchNorm2d(planes)
        self.downsample = downsample

    def forward(self, x):
        identity = x if self.downsample is None else self.downsample(x)
        out = F.relu(self.bn1(self.conv1(x)), inplace=True)
        out = self.bn2(self.conv2(out))
        return F.relu(out + identity, inplace=True)


class Bottleneck(nn.Module):
    expansion = 4

    def __init__(self, inplanes, planes, stride=1, dilation=1, downsample=None):
        super().__init__()
        self.conv1 = nn.Conv2d(inplanes, planes, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(planes)
        self.conv2 = nn.Conv2d(planes, planes, 3, stride=stride, padding=dilation,
                               dilation=dilation, bias=False)
        self.bn2 = nn.BatchNorm2d(planes)
        self.conv3 = nn.Conv2d(planes, planes * 4, 1, bias=False)
        self.bn3 = nn.BatchNorm2d(planes * 4)
        self.downsample = downsample

    def forward(self, x):
        identity = x if self.downsample is None else self.downsample(x)
        out = F.relu(self.bn1(self.conv1(x)), inplace=True)
        out = F.relu(self.bn2(self.conv2(out)), inplace=True)
        out = self.bn3(self.conv3(out))
        return F.relu(out + identity, inplace=True)


class PyramidPooling(nn.Module):
    """Multi-bin average pooling branches, each reduced by a 1x1 conv and
    upsampled back, concatenated with the input features."""

    def __init__(self, in_channels, branch_channels, bins=(1, 2, 3, 6)):
        super().__init__()
        self.branches = nn.ModuleList(
            nn.Sequential(
                nn.AdaptiveAvgPool2d(b),
                nn.Conv2d(in_channels, branch_channels, 1, bias=False),
                nn.BatchNorm2d(branch_channels),
                nn.ReLU(inplace=True),
            )
            for b in bins
        )

    def forward(self, x):
        size = x.shape[2:]
        out = [x]
        for branch in self.branches:
            y = branch(x)
            out.append(F.interpolate(y, size=size, mode="bilinear", align_corners=False))
        return torch.cat(out, dim=1)


def _conv_bn_relu(in_ch, out_ch, kernel, **kw):
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel, bias=False, **kw),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=True),
    )


class PSPSegmenter(nn.Module):
    """Dilated ResNet encoder (output stride 8) with a pyramid-pooling head.

    The deep 3x3 stem, the pyramid head reducing to a quarter of the encoder
    width, and the auxiliary classifier branch follow the reference
    implementations this model family is benchmarked against, so parameter and
    FLOP accounting line up with the published size columns. No loss is ever
    attached to the auxiliary branch here; it is part of the architecture, not
    of the training objective.
    """

    def __init__(self, block, layers, num_classes, width_multiplier=1.0, bins=(1, 2, 3, 6)):
        super().__init__()
        w = lambda c: _width(c, width_multiplier)
        self.stem = nn.Sequential(
            _conv_bn_relu(3, w(64), 3, stride=2, padding=1),
            _conv_bn_relu(w(64), w(64), 3, padding=1),
            _conv_bn_relu(w(64), w(128), 3, padding=1),
            nn.MaxPool2d(3, stride=2, padding=1),
        )
        self.inplanes = w(128)
        self.layer1 = self._make_layer(block, w(64), layers[0])
        self.layer2 = self._make_layer(block, w(128), layers[1], stride=2)
        self.layer3 = self._make_layer(block, w(256), layers[2], dilation=2)
        self.layer4 = self._make_layer(block, w(512), layers[3], dilation=4)

        fea_dim = w(512) * block.expansion
        mid_dim = max(1, fea_dim // 4)
        self.ppm = PyramidPooling(fea_dim, mid_dim, bins)
        self.bottleneck = nn.Sequential(
            _conv_bn_relu(fea_dim * 2, mid_dim, 3, padding=1),
            nn.Dropout2d(0.1),
        )
        self.classifier = nn.Conv2d(mid_dim, num_classes, 1)
        aux_in = w(256) * block.expansion
        self.aux_head = nn.Sequential(
            _conv_bn_relu(aux_in, mid_dim, 3, padding=1),
            nn.Dropout2d(0.1),
            nn.Conv2d(mid_dim, num_classes, 1),
        )
        self.tap_channels = fea_dim
        self._init_weights()

    def _make_layer(self, block, planes, blocks, stride=1, dilation=1):
        downsample = None
        if stride != 1 or self.inplanes != planes * block.expansion:
            downsample = nn.Sequential(
                nn.Conv2d(self.inplanes, planes * block.expansion, 1, stride=stride, bias=False),
                nn.BatchNorm2d(planes * block.expansion),
            )
        layers = [block(self.inplanes, planes, stride, dilation, downsample)]
        self.inplanes = planes * block.expansion
        layers += [block(self.inplanes, planes, dilation=dilation) for _ in range(1, blocks)]
        return nn.Sequential(*layers)

    def _init_weights(self):
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, mode="fan_out", nonlinearity="relu")
                if m.bias is not None:
                    nn.init.zeros_(m.bias)
            elif isinstance(m, nn.BatchNorm2d):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)

    def forward(self, x):
        size = x.shape[2:]
        x = self.stem(x)
        x = self.layer1(x)
        x = self.layer2(x)
        c3 = self.layer3(x)
        tap = self.layer4(c3)
        y = self.bottleneck(self.ppm(tap))
        logits = self.classifier(y)
        logits = F.interpolate(logits, size=size, mode="bilinear", align_corners=False)
        return {"logits": logits, "tap": tap, "aux": self.aux_head(c3)}


class FCNSegmenter(nn.Module):
    """ResNet encoder with a bare 1x1 classifier (head="none")."""

    def __init__(self, block, layers, num_classes, width_multiplier=1.0):
        super().__init__()
        psp = PSPSegmenter(block, layers, num_classes, width_multiplier)
        self.stem, self.layer1, self.layer2 = psp.stem, psp.layer1, psp.layer2
        self.layer3, self.layer4 = psp.layer3, psp.layer4
        self.tap_channels = psp.tap_channels
        self.classifier = nn.Conv2d(self.tap_channels, num_classes, 1)

    def forward(self, x):
        size = x.shape[2:]
        x = self.stem(x)
        x = self.layer2(self.layer1(x))
        tap = self.layer4(self.layer3(x))
        logits = F.interpolate(self.classifier(tap), size=size, mode="bilinear", align_corners=False)
        return {"logits": logits, "tap": tap}


class TinyCNN(nn.Module):
    """Two stride-2 stages plus two dilated blocks (output stride 4); under
    100k parameters at full width so desk-scale experiments run in seconds on
    a CPU while keeping boundaries sharp enough for meaningful mIoU."""

    def __init__(self, num_classes, width_multiplier=1.0):
        super().__init__()
        w = lambda c: _width(c, width_multiplier)
        self.encoder = nn.Sequential(
            _conv_bn_relu(3, w(16), 3, stride=2, padding=1),
            _conv_bn_relu(w(16), w(32), 3, stride=2, padding=1),
            _conv_bn_relu(w(32), w(64), 3, padding=2, dilation=2),
            _conv_bn_relu(w(64), w(64), 3, padding=2, dilation=2),
        )
        self.classifier = nn.Conv2d(w(64), num_classes, 1)
        self.tap_channels = w(64)

    def forward(self, x):
        size = x.shape[2:]
        tap = self.encoder(x)
        logits = F.interpolate(self.classifier(tap), size=size, mode="bilinear", align_corners=False)
        return {"logits": logits, "tap": tap}


def build_model(spec: ModelSpec, seed: int | None = None) -> nn.Module:
    """Build the network described by `spec`.

    The returned module maps (B, 3, H, W) images to a dict with "logits"
    (B, num_classes, H, W) and "tap", the final encoder feature map consumed
    by the relation losses. When `seed` is given the initialization is
    reproducible and the global RNG state is left untouched.
    """
    if seed is not None:
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            return build_model(spec)

    mult = spec.width_multiplier
    backbone = spec.backbone
    if backbone == "resnet18_half":
        backbone, mult = "resnet18", 0.5 * mult

    if backbone == "tiny_cnn":
        if spec.head != "none":
            raise ValueError("tiny_cnn supports head='none' only")
        model = TinyCNN(spec.num_classes, mult)
    else:
        block = Bottleneck if backbone == "resnet101" else BasicBlock
        layers = _RESNET_LAYERS[backbone]
        if spec.head == "ppm":
            model = PSPSegmenter(block, layers, spec.num_classes, mult)
        else:
            model = FCNSegmenter(block, layers, spec.num_classes, mult)

    model.spec = spec
    if spec.pretrained_path is not None:
        load_checkpoint_weights(model, spec.pretrained_path)
    return model


def load_checkpoint_weights(model: nn.Module, path: str | Path) -> None:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    state = payload.get("model", payload) if isinstance(payload, dict) else payload
    own = model.state_dict()
    bad = [f"{k}: checkpoint {tuple(v.shape)} vs model {tuple(own[k].shape)}"
           for k, v in state.items() if k in own and tuple(v.shape) != tuple(own[k].shape)]
    if bad:
        raise ValueError("checkpoint shape mismatch:\n  " + "\n  ".join(bad))
    model.load_state_dict(state)


def count_params(model: nn.Module) -> float:
    """Trainable parameter count in millions."""
    return sum(p.numel() for p in model.parameters() if p.requires_grad) / 1e6


def count_flops(model: nn.Module, input_h: int, input_w: int, ops_per_mac: int = 1,
                input_channels: int = 3) -> float:
    """Floating-point operations of one forward pass, in giga-ops.

    Counts convolution and linear layers only (batch norm and activations are
    ignored). One fused multiply-accumulate counts as `ops_per_mac` operations;
    the default of 1 is the convention under which the published model-size
    tables for this family were produced, pass 2 for strict multiply+add
    counting. Shapes are traced on the meta device, so no real compute or
    memory proportional to the input is spent.
    """
    if input_h < 1 or input_w < 1:
        raise ValueError("input size must be positive")
    traced = copy.deepcopy(model).to("meta")
    traced.eval()
    total = 0

    def conv_hook(mod, inputs, output):
        nonlocal total
        out_positions = output.shape[-2] * output.shape[-1]
        kh, kw = mod.kernel_size
        macs = out_positions * mod.out_channels * (mod.in_channels // mod.groups) * kh * kw
        total += ops_per_mac * macs
        if mod.bias is not None:
            total += out_positions * mod.out_channels

    def linear_hook(mod, inputs, output):
        nonlocal total
        rows = output.numel() // output.shape[-1]
        total += ops_per_mac * rows * mod.in_features * mod.out_features
        if mod.bias is not None:
            total += rows * mod.out_features

    handles = []
    for m in traced.modules():
        if isinstance(m, nn.Conv2d):
            handles.append(m.register_forward_hook(conv_hook))
        elif isinstance(m, nn.Linear):
            handles.append(m.register_forward_hook(linear_hook))
    try:
        with torch.no_grad():
            traced(torch.zeros(1, input_channels, input_h, input_w, device="meta"))
    finally:
        for h in handles:
            h.remove()
    return total / 1e9


def tap_shape(model: nn.Module, input_h: int, input_w: int) -> tuple[int, int, int]:
    """(C, H, W) of the encoder feature tap for the given input size."""
    traced = copy.deepcopy(model).to("meta")
    traced.eval()
    with torch.no_grad():
        out = traced(torch.zeros(1, 3, input_h, input_w, device="meta"))
    return tuple(out["tap"].shape[1:])


def model_report(spec: ModelSpec, input_h: int, input_w: int, seed: int = 0) -> ModelReport:
    model = build_model(spec, seed=seed)
    return ModelReport(
        params_millions=count_params(model),
        flops_giga=count_flops(model, input_h, input_w),
        input_hw=(input_h, input_w),
        tap_shape=tap_shape(model, input_h, input_w),
    )
