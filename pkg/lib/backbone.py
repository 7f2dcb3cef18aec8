import logging
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .data.io import check_pressure_range
from .errors import ConfigurationError, ShapeError
from .nn import BatchNorm, Conv2d, Linear, Module
from .ops import global_avg_pool, leaky_relu
from .tensor import Tensor, as_tensor

logger = logging.getLogger(__name__)

FRAME_SHAPE = (1, 32, 32)

# channels per stage, residual blocks per stage, feature dimension
PRESETS: Dict[str, Tuple[Tuple[int, ...], int, int]] = {
    "resnet18": ((64, 128, 256, 512), 2, 512),
    "tiny": ((16, 32), 1, 64),
}


@dataclass(frozen=True)
class BackboneConfig:
    preset: str = "tiny"
    feature_dim: int = 64
    num_classes: int = 26

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigurationError(f"unknown backbone preset '{self.preset}', expected one of {sorted(PRESETS)}")
        if self.feature_dim != PRESETS[self.preset][2]:
            raise ConfigurationError(
                f"preset '{self.preset}' produces {PRESETS[self.preset][2]} features, got feature_dim={self.feature_dim}"
            )
        if self.feature_dim < 8:
            raise ConfigurationError(f"feature_dim must be at least 8, got {self.feature_dim}")
        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes must be at least 2, got {self.num_classes}")

    @classmethod
    def for_preset(cls, preset: str, num_classes: int) -> "BackboneConfig":
        if preset not in PRESETS:
            raise ConfigurationError(f"unknown backbone preset '{preset}'")
        return cls(preset, PRESETS[preset][2], num_classes)


class ResidualBlock(Module):
    """
    Two convolution + batch-norm stages with a skip connection.

    A downsampling block (stride 2) opens with a 4x4 convolution, padding 1, so that
    even inputs halve exactly. The skip path is a ``stride x stride`` projection
    (with batch norm) whenever the stride or the channel count changes.
    """

    def __init__(self, in_channels: int, out_channels: int, stride: int, rng: np.random.Generator):
        if stride not in (1, 2):
            raise ConfigurationError(f"residual blocks support stride 1 or 2, got {stride}")
        if stride == 1:
            self.conv1 = Conv2d(in_channels, out_channels, 3, rng)
        else:
            self.conv1 = Conv2d(in_channels, out_channels, 4, rng, stride=2, padding=1)
        self.bn1 = BatchNorm(out_channels)
        self.conv2 = Conv2d(out_channels, out_channels, 3, rng)
        self.bn2 = BatchNorm(out_channels)
        if stride != 1 or in_channels != out_channels:
            self.shortcut = Conv2d(in_channels, out_channels, stride, rng, stride=stride, padding=0)
            self.shortcut_bn = BatchNorm(out_channels)
        else:
            self.shortcut = None
            self.shortcut_bn = None

    def forward(self, x: Tensor) -> Tensor:
        out = leaky_relu(self.bn1(self.conv1(x)), 0.0)
        out = self.bn2(self.conv2(out))
        skip = x if self.shortcut is None else self.shortcut_bn(self.shortcut(x))
        return leaky_relu(out + skip, 0.0)


class Backbone(Module):
    """
    Residual CNN turning 1x32x32 tactile frames into feature vectors.

    The stem is a single-channel 3x3 stride-1 convolution without max pooling, as a
    7x7 stride-2 stem would discard most of a 32x32 frame. Each stage after the
    first halves the spatial size. Global average pooling yields the features; the
    ``head`` is a linear classifier used only for pretraining.
    """

    def __init__(self, config: BackboneConfig, rng: np.random.Generator):
        channels, blocks, feature_dim = PRESETS[config.preset]
        self.config = config
        self.stem = Conv2d(1, channels[0], 3, rng)
        self.stem_bn = BatchNorm(channels[0])

        self.blocks = []
        in_channels = channels[0]
        for stage, out_channels in enumerate(channels):
            for block in range(blocks):
                stride = 2 if stage > 0 and block == 0 else 1
                self.blocks.append(ResidualBlock(in_channels, out_channels, stride, rng))
                in_channels = out_channels

        if in_channels != feature_dim:
            self.expand = Conv2d(in_channels, feature_dim, 1, rng, padding=0)
            self.expand_bn = BatchNorm(feature_dim)
        else:
            self.expand = None
            self.expand_bn = None

        self.head = Linear(feature_dim, config.num_classes, rng)

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    def forward(self, frames: Tensor) -> Tensor:
        """
        Computes features for a batch of frames.

        Parameters
        ----------
        frames : Tensor
            Shape (B, 1, 32, 32), pressures in [0, 1].

        Returns
        -------
        Tensor
            Shape (B, D).
        """
        frames = as_tensor(frames)
        if frames.ndim != 4 or frames.shape[1:] != FRAME_SHAPE:
            raise ShapeError(f"backbone expects frames of shape (B, 1, 32, 32), got {frames.shape}")
        check_pressure_range(frames.data, "backbone input")

        x = leaky_relu(self.stem_bn(self.stem(frames)), 0.0)
        for block in self.blocks:
            x = block(x)
        if self.expand is not None:
            x = leaky_relu(self.expand_bn(self.expand(x)), 0.0)
        return global_avg_pool(x)

    def classify(self, frames: Tensor) -> Tensor:
        """Pretraining logits of shape (B, N_c)."""
        return self.head(self.forward(frames))


def _as_batch(frame) -> Tensor:
    frame = as_tensor(frame)
    if frame.shape != FRAME_SHAPE:
        raise ShapeError(f"expected a frame of shape {FRAME_SHAPE}, got {frame.shape}")
    return frame.reshape(1, *FRAME_SHAPE)


def backbone_forward(backbone: Backbone, frame) -> Tensor:
    """Feature vector of length D for a single 1x32x32 frame."""
    return backbone(_as_batch(frame)).reshape(-1)


def backbone_classify(backbone: Backbone, frame) -> Tensor:
    """Class logits of length N_c for a single 1x32x32 frame."""
    return backbone.classify(_as_batch(frame)).reshape(-1)
