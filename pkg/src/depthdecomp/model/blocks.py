"""Convolutional building blocks shared by the encoder and decoders."""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn


class SEBlock(nn.Module):
    """Squeeze-and-excitation channel attention.

    Global average pooling followed by a two-layer bottleneck; the
    sigmoid keeps every channel gate strictly inside (0, 1).
    """

    def __init__(self, channels: int, reduction: int = 16):
        super().__init__()
        hidden = max(channels // reduction, 1)
        self.fc1 = nn.Conv2d(channels, hidden, kernel_size=1)
        self.fc2 = nn.Conv2d(hidden, channels, kernel_size=1)

    def gates(self, x: torch.Tensor) -> torch.Tensor:
        squeezed = x.mean(dim=(-2, -1), keepdim=True)
        return torch.sigmoid(self.fc2(F.relu(self.fc1(squeezed))))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * self.gates(x)


class SkipAdapter(nn.Module):
    """Per-decoder adaptation of an encoder feature: 1x1 projection + SE."""

    def __init__(self, in_channels: int, out_channels: int, se_reduction: int):
        super().__init__()
        self.proj = nn.Conv2d(in_channels, out_channels, kernel_size=1)
        self.se = SEBlock(out_channels, se_reduction)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.se(self.proj(x))


class UpsampleBlock(nn.Module):
    """Bilinear upsampling followed by two 3x3 convolutions with ReLU.

    An adapted skip feature, when given, is added right after the
    upsampling, so it must match the block's input width.
    """

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1)
        self.conv2 = nn.Conv2d(out_channels, out_channels, kernel_size=3, padding=1)

    def forward(
        self,
        x: torch.Tensor,
        size: tuple[int, int],
        skip: torch.Tensor | None = None,
    ) -> torch.Tensor:
        x = F.interpolate(x, size=size, mode="bilinear", align_corners=False)
        if skip is not None:
            x = x + skip
        x = F.relu(self.conv1(x))
        return F.relu(self.conv2(x))


class EncoderStage(nn.Module):
    """One stride-2 downsampling stage: strided 3x3 conv then a plain 3x3."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.down = nn.Conv2d(in_channels, out_channels, 3, stride=2, padding=1)
        self.conv = nn.Conv2d(out_channels, out_channels, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.relu(self.conv(F.relu(self.down(x))))


def init_parameters(module: nn.Module, generator: torch.Generator) -> None:
    """Deterministic re-initialization of every parameter.

    Conv and linear weights get He fan-in normals, positional encodings
    small uniforms, norms identity, biases zero. Drawing from an explicit
    generator in registration order makes initialization bitwise
    reproducible for a fixed seed, independent of global RNG state.
    """
    for name, param in module.named_parameters():
        with torch.no_grad():
            if name.endswith("pos_embed"):
                param.uniform_(-0.02, 0.02, generator=generator)
            elif param.dim() >= 2:
                fan_in = param.shape[1]
                for s in param.shape[2:]:
                    fan_in *= s
                param.normal_(0.0, (2.0 / fan_in) ** 0.5, generator=generator)
            elif "weight" in name:  # norm scales
                param.fill_(1.0)
            else:
                param.zero_()
