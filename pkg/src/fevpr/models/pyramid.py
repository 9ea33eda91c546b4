"""Bottom-up backbone stages and top-down lateral fusion pyramid.

For a 256x256 input the hybrid feature (128 x 64 x 64) becomes stages
S1 = 128 x 32 x 32, S2 = 256 x 16 x 16, S3 = 512 x 8 x 8, then lateral
fusion yields three 256-channel maps at 8/16/32 resolution, coarsest first.
Channel counts scale with `width` (64 -> the numbers above).
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .attention import make_attention
from .two_stream import make_stage


class BackboneStages(nn.Module):
    """Stage 1: pool + attention on the hybrid feature; stages 2-3: residual.

    Stage 2 has six blocks (stride-2 entry, -> 4 x width channels) and gets
    an attention layer; stage 3 has three blocks (-> 8 x width) and none.
    """

    def __init__(
        self,
        in_channels: int,
        width: int = 64,
        attention: bool = True,
        attention_reduction: int = 16,
    ):
        super().__init__()
        self.in_channels = in_channels
        self.stage_channels = (in_channels, 4 * width, 8 * width)
        self.pool = nn.MaxPool2d(3, stride=2, padding=1)
        self.attn1 = make_attention(in_channels, attention, attention_reduction)
        self.stage2 = make_stage(in_channels, 4 * width, blocks=6, stride=2)
        self.attn2 = make_attention(4 * width, attention, attention_reduction)
        self.stage3 = make_stage(4 * width, 8 * width, blocks=3, stride=2)

    def forward(self, hybrid: torch.Tensor):
        if hybrid.shape[1] != self.in_channels:
            raise ValueError(
                f"backbone expects {self.in_channels} channels, got {hybrid.shape[1]}"
            )
        s1 = self.attn1(self.pool(hybrid))
        s2 = self.attn2(self.stage2(s1))
        s3 = self.stage3(s2)
        return s1, s2, s3


class _ConvBnRelu(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int):
        super().__init__()
        self.conv = nn.Conv2d(
            in_channels, out_channels, kernel_size, padding=kernel_size // 2, bias=False
        )
        self.bn = nn.BatchNorm2d(out_channels)
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x):
        return self.relu(self.bn(self.conv(x)))


class LateralFusion(nn.Module):
    """Top-down pathway fusing adjacent stages by concatenation.

    The coarsest output comes from a 1x1 projection of S3; each finer level
    concatenates the 2x-upsampled previous level with a 1x1-projected skip
    from the matching stage and mixes with a 3x3 convolution.  All outputs
    share `pyramid_channels`.
    """

    def __init__(
        self,
        stage_channels: tuple[int, int, int],
        pyramid_channels: int = 256,
        upsample: str = "nearest",
    ):
        super().__init__()
        c1, c2, c3 = stage_channels
        p = pyramid_channels
        self.pyramid_channels = p
        self.upsample_mode = upsample
        self.project3 = _ConvBnRelu(c3, p, 1)
        self.skip2 = nn.Conv2d(c2, p, 1)
        self.fuse2 = _ConvBnRelu(2 * p, p, 3)
        self.skip1 = nn.Conv2d(c1, p, 1)
        self.fuse1 = _ConvBnRelu(2 * p, p, 3)

    def _up(self, x: torch.Tensor) -> torch.Tensor:
        return F.interpolate(x, scale_factor=2, mode=self.upsample_mode)

    def forward(self, s1: torch.Tensor, s2: torch.Tensor, s3: torch.Tensor):
        m1 = self.project3(s3)
        m2 = self.fuse2(torch.cat([self._up(m1), self.skip2(s2)], dim=1))
        m3 = self.fuse1(torch.cat([self._up(m2), self.skip1(s1)], dim=1))
        return m1, m2, m3


class SingleScaleHead(nn.Module):
    """Ablation path: project one stage straight to pyramid width, no fusion."""

    def __init__(self, stage_channels: int, pyramid_channels: int = 256):
        super().__init__()
        self.project = _ConvBnRelu(stage_channels, pyramid_channels, 1)

    def forward(self, stage: torch.Tensor) -> torch.Tensor:
        return self.project(stage)
