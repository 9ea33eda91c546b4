"""Two-stream shallow encoders for frames and event frames, fused by concat.

Each stream follows the same recipe (7x7 stride-2 conv, attention, stride-2
max-pool, three 3x3 residual blocks, attention, batch-norm, ReLU) and maps a
1- or 2-channel H x W input to a `width` x H/4 x W/4 feature map.  The two
streams share architecture but never weights.
"""

import torch
import torch.nn as nn

from .attention import make_attention


class BasicBlock(nn.Module):
    """3x3 residual block with optional stride-2/channel-change projection."""

    def __init__(self, in_channels: int, out_channels: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, stride, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, 1, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_channels)
        self.relu = nn.ReLU(inplace=True)
        if stride != 1 or in_channels != out_channels:
            self.downsample = nn.Sequential(
                nn.Conv2d(in_channels, out_channels, 1, stride, bias=False),
                nn.BatchNorm2d(out_channels),
            )
        else:
            self.downsample = None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        identity = x if self.downsample is None else self.downsample(x)
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + identity)


def make_stage(in_channels: int, out_channels: int, blocks: int, stride: int = 2) -> nn.Sequential:
    layers = [BasicBlock(in_channels, out_channels, stride)]
    layers += [BasicBlock(out_channels, out_channels) for _ in range(blocks - 1)]
    return nn.Sequential(*layers)


class StreamEncoder(nn.Module):
    def __init__(
        self,
        in_channels: int,
        width: int = 64,
        attention: bool = True,
        attention_reduction: int = 16,
    ):
        super().__init__()
        self.in_channels = in_channels
        self.width = width
        self.conv1 = nn.Conv2d(in_channels, width, 7, stride=2, padding=3)
        self.attn1 = make_attention(width, attention, attention_reduction)
        self.pool = nn.MaxPool2d(3, stride=2, padding=1)
        self.blocks = nn.Sequential(
            BasicBlock(width, width), BasicBlock(width, width), BasicBlock(width, width)
        )
        self.attn2 = make_attention(width, attention, attention_reduction)
        self.bn = nn.BatchNorm2d(width)
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.in_channels:
            raise ValueError(
                f"encoder expects {self.in_channels} input channel(s), got {x.shape[1]}"
            )
        if x.shape[-2] % 4 or x.shape[-1] % 4:
            raise ValueError(f"input size must be divisible by 4, got {tuple(x.shape[-2:])}")
        x = self.conv1(x)
        x = self.attn1(x)
        x = self.pool(x)
        x = self.blocks(x)
        x = self.attn2(x)
        return self.relu(self.bn(x))


def fuse(frame_features: torch.Tensor, event_features: torch.Tensor) -> torch.Tensor:
    """Concatenate stream features along channels, frame channels first."""
    if frame_features.shape[-2:] != event_features.shape[-2:]:
        raise ValueError(
            f"spatial mismatch: {tuple(frame_features.shape[-2:])} vs "
            f"{tuple(event_features.shape[-2:])}"
        )
    return torch.cat([frame_features, event_features], dim=1)


class TwoStreamEncoder(nn.Module):
    """Encode both modalities and fuse, or run one stream in ablation modes.

    `mode` is "both", "frame_only", or "event_only"; the hybrid feature has
    2 x width channels when fused, width otherwise.
    """

    def __init__(
        self,
        width: int = 64,
        frame_channels: int = 1,
        event_channels: int = 2,
        mode: str = "both",
        attention: bool = True,
        attention_reduction: int = 16,
    ):
        super().__init__()
        if mode not in ("both", "frame_only", "event_only"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.width = width
        self.frame_encoder = (
            StreamEncoder(frame_channels, width, attention, attention_reduction)
            if mode != "event_only" else None
        )
        self.event_encoder = (
            StreamEncoder(event_channels, width, attention, attention_reduction)
            if mode != "frame_only" else None
        )

    @property
    def hybrid_channels(self) -> int:
        return 2 * self.width if self.mode == "both" else self.width

    def forward(self, frame: torch.Tensor, event_frame: torch.Tensor) -> torch.Tensor:
        if self.mode == "frame_only":
            return self.frame_encoder(frame)
        if self.mode == "event_only":
            return self.event_encoder(event_frame)
        return fuse(self.frame_encoder(frame), self.event_encoder(event_frame))
