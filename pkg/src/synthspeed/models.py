"""Clip-to-speed regressors.

Two architectures share one calling convention: ``model.prepare(frames)`` turns
a uint8 clip batch of shape (B, N, H, W, 3) into the tensor the network's
``forward`` expects, and ``forward`` returns (B, 1) normalised speeds.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from synthspeed.dataset.clips import ClipSample, NormalizationSpec, denormalize_speed

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
R3D_STRIDE = 16  # stem (2) x three strided stages (2^3)
BACKBONE_SHAPE = (512, 7, 7)


@dataclass(frozen=True)
class R3DConfig:
    n_steps: int = 16
    input_hw: tuple[int, int] = (112, 112)
    width_multiplier: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "input_hw", tuple(self.input_hw))
        if self.n_steps < 2:
            raise ValueError(f"n_steps must be >= 2, got {self.n_steps}")
        if not 0 < self.width_multiplier <= 1:
            raise ValueError(f"width_multiplier must be in (0, 1], got {self.width_multiplier}")
        h, w = self.input_hw
        if h % R3D_STRIDE or w % R3D_STRIDE:
            raise ValueError(f"input size {h}x{w} must be divisible by the network stride {R3D_STRIDE}")


@dataclass(frozen=True)
class CnnGruConfig:
    n_steps: int = 32
    input_hw: tuple[int, int] = (224, 224)
    backbone: str = "vgg16"
    pretrained: bool = False
    gru_units: int = 50

    def __post_init__(self):
        object.__setattr__(self, "input_hw", tuple(self.input_hw))
        if self.n_steps < 2:
            raise ValueError(f"n_steps must be >= 2, got {self.n_steps}")
        if self.backbone not in BACKBONES:
            raise ValueError(f"unknown backbone {self.backbone!r}; choose from {sorted(BACKBONES)}")
        if self.gru_units < 1:
            raise ValueError("gru_units must be positive")
        if self.pretrained and self.backbone != "vgg16":
            raise ValueError(f"no pretrained weights exist for backbone {self.backbone!r}")


@dataclass(frozen=True)
class ModelSummary:
    trainable_params: int
    frozen_params: int
    input_shape: tuple
    output_shape: tuple = (None, 1)


def _to_float_clip(frames) -> torch.Tensor:
    if isinstance(frames, np.ndarray):
        frames = torch.from_numpy(np.ascontiguousarray(frames))
    if frames.dtype == torch.uint8:
        return frames.float().div_(255.0)
    return frames.float()


# ---------------------------------------------------------------- 3D ResNet-18

class BasicBlock3d(nn.Module):
    def __init__(self, c_in, c_out, stride=1):
        super().__init__()
        self.conv1 = nn.Conv3d(c_in, c_out, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm3d(c_out)
        self.conv2 = nn.Conv3d(c_out, c_out, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm3d(c_out)
        self.relu = nn.ReLU(inplace=True)
        self.downsample = None
        if stride != 1 or c_in != c_out:
            self.downsample = nn.Sequential(
                nn.Conv3d(c_in, c_out, 1, stride=stride, bias=False),
                nn.BatchNorm3d(c_out),
            )

    def forward(self, x):
        identity = x if self.downsample is None else self.downsample(x)
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + identity)


class R3D18(nn.Module):
    """ResNet-18 with full 3D kernels: (3,7,7) stem, four stages of two blocks."""

    kind = "r3d18"

    def __init__(self, config: R3DConfig):
        super().__init__()
        self.config = config
        widths = [max(1, round(c * config.width_multiplier)) for c in (64, 128, 256, 512)]
        self.stem = nn.Sequential(
            nn.Conv3d(3, widths[0], (3, 7, 7), stride=(1, 2, 2), padding=(1, 3, 3), bias=False),
            nn.BatchNorm3d(widths[0]),
            nn.ReLU(inplace=True),
        )
        stages, c_in = [], widths[0]
        for i, c in enumerate(widths):
            stride = 1 if i == 0 else 2
            stages.append(nn.Sequential(BasicBlock3d(c_in, c, stride), BasicBlock3d(c, c)))
            c_in = c
        self.layers = nn.Sequential(*stages)
        self.pool = nn.AdaptiveAvgPool3d(1)
        self.fc = nn.Linear(c_in, 1)
        self._init_weights()

    def _init_weights(self):
        for m in self.modules():
            if isinstance(m, nn.Conv3d):
                nn.init.kaiming_normal_(m.weight, mode="fan_out", nonlinearity="relu")
            elif isinstance(m, nn.BatchNorm3d):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)
        nn.init.normal_(self.fc.weight, 0, 0.01)
        nn.init.zeros_(self.fc.bias)

    @property
    def input_shape(self):
        return (None, 3, self.config.n_steps, *self.config.input_hw)

    def prepare(self, frames) -> torch.Tensor:
        """(B, N, H, W, 3) uint8 -> (B, 3, N, H, W) float in [0, 1]."""
        return _to_float_clip(frames).permute(0, 4, 1, 2, 3).contiguous()

    def forward(self, x):
        x = self.layers(self.stem(x))
        return self.fc(torch.flatten(self.pool(x), 1))


# ---------------------------------------------------------------- CNN-GRU

def _vgg16_features(pretrained: bool) -> nn.Module:
    from torchvision.models import VGG16_Weights, vgg16

    try:
        net = vgg16(weights=VGG16_Weights.IMAGENET1K_V1 if pretrained else None)
    except Exception as exc:  # weight download failure
        raise RuntimeError(f"could not load pretrained VGG16 weights: {exc}") from exc
    return net.features


def _tiny_features(pretrained: bool) -> nn.Module:
    """Cheap random-init extractor with the same 7x7x512 output contract."""
    chans = [3, 16, 32, 64, 512]
    layers = []
    for c_in, c_out in zip(chans, chans[1:]):
        layers += [nn.Conv2d(c_in, c_out, 3, stride=2, padding=1), nn.ReLU(inplace=True)]
    layers.append(nn.AdaptiveAvgPool2d(7))
    return nn.Sequential(*layers)


BACKBONES = {"vgg16": _vgg16_features, "tiny": _tiny_features}


class CnnGru(nn.Module):
    """Frozen per-frame CNN features -> GRU -> dense(1) on the final hidden state."""

    kind = "cnn_gru"

    def __init__(self, config: CnnGruConfig, fetch_weights: bool = True):
        super().__init__()
        self.config = config
        # fetch_weights=False builds the pretrained architecture without downloading;
        # used when the weights are about to be restored from a checkpoint
        self.backbone = BACKBONES[config.backbone](config.pretrained and fetch_weights)
        for p in self.backbone.parameters():
            p.requires_grad_(False)
        self.backbone.eval()
        with torch.no_grad():
            out = self.backbone(torch.zeros(1, 3, *config.input_hw))
        if tuple(out.shape[1:]) != BACKBONE_SHAPE:
            raise ValueError(
                f"backbone {config.backbone!r} gives features {tuple(out.shape[1:])} at input "
                f"{config.input_hw}; expected {BACKBONE_SHAPE}"
            )
        self.feature_dim = int(np.prod(BACKBONE_SHAPE))
        self.gru = nn.GRU(self.feature_dim, config.gru_units, batch_first=True)
        self.head = nn.Linear(config.gru_units, 1)
        if config.pretrained:
            self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 1, 1, 1, 3), persistent=False)
            self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 1, 1, 1, 3), persistent=False)

    def train(self, mode: bool = True):
        super().train(mode)
        self.backbone.eval()
        return self

    @property
    def input_shape(self):
        return (None, self.config.n_steps, *self.config.input_hw, 3)

    def prepare(self, frames) -> torch.Tensor:
        x = _to_float_clip(frames)
        if self.config.pretrained:
            x = (x - self.mean) / self.std
        return x

    def features(self, x) -> torch.Tensor:
        b, n, h, w, c = x.shape
        with torch.no_grad():
            f = self.backbone(x.reshape(b * n, h, w, c).permute(0, 3, 1, 2))
        return f.reshape(b, n, -1)

    def forward(self, x):
        _, h_last = self.gru(self.features(x))
        return self.head(h_last[-1])


# ---------------------------------------------------------------- builders

def _seeded(seed, ctor):
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return ctor()


def build_r3d18(config: R3DConfig = R3DConfig(), seed: int = 0, **_) -> R3D18:
    return _seeded(seed, lambda: R3D18(config))


def build_cnn_gru(config: CnnGruConfig = CnnGruConfig(), seed: int = 0, fetch_weights: bool = True) -> CnnGru:
    return _seeded(seed, lambda: CnnGru(config, fetch_weights))


MODEL_KINDS = {"r3d18": (R3DConfig, build_r3d18), "cnn_gru": (CnnGruConfig, build_cnn_gru)}


def canonical_kind(kind: str) -> str:
    kind = kind.replace("-", "_")
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; choose from {sorted(MODEL_KINDS)}")
    return kind


def make_config(kind: str, overrides: dict | None = None):
    cls = MODEL_KINDS[canonical_kind(kind)][0]
    overrides = dict(overrides or {})
    unknown = set(overrides) - {f.name for f in dataclasses.fields(cls)}
    if unknown:
        raise ValueError(f"unknown {kind} config keys: {sorted(unknown)}")
    return cls(**overrides)


def build_model(kind: str, config=None, seed: int = 0, fetch_weights: bool = True) -> nn.Module:
    kind = canonical_kind(kind)
    if config is None or isinstance(config, dict):
        config = make_config(kind, config)
    return MODEL_KINDS[kind][1](config, seed, fetch_weights=fetch_weights)


def config_dict(config) -> dict:
    d = dataclasses.asdict(config)
    d["input_hw"] = list(d["input_hw"])
    return d


def summarize(model: nn.Module) -> ModelSummary:
    trainable = sum(p.numel() for p in model.parameters() if p.requires_grad)
    frozen = sum(p.numel() for p in model.parameters() if not p.requires_grad)
    return ModelSummary(trainable, frozen, model.input_shape)


@torch.no_grad()
def predict_normalized(model: nn.Module, frames) -> np.ndarray:
    """Raw network outputs for a uint8 batch (B, N, H, W, 3), in inference mode."""
    was_training = model.training
    model.eval()
    try:
        return model(model.prepare(frames)).squeeze(1).double().numpy()
    finally:
        model.train(was_training)


def predict_speed(model: nn.Module, clip: ClipSample, norm: NormalizationSpec = NormalizationSpec()) -> float:
    if clip.n_steps != model.config.n_steps:
        raise ValueError(f"clip has {clip.n_steps} timesteps but the {model.kind} model expects {model.config.n_steps}")
    y = predict_normalized(model, clip.frames[None])[0]
    return float(denormalize_speed(y, norm))
