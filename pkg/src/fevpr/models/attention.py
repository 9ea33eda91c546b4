"""Channel + spatial attention layer used throughout the descriptor network."""

import torch
import torch.nn as nn


class ChannelAttention(nn.Module):
    """Gate channels with a shared MLP over global average- and max-pooled stats."""

    def __init__(self, channels: int, reduction: int = 16):
        super().__init__()
        hidden = max(channels // reduction, 1)
        self.fc1 = nn.Linear(channels, hidden)
        self.fc2 = nn.Linear(hidden, channels)
        self.relu = nn.ReLU()

    def _mlp(self, pooled: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.relu(self.fc1(pooled)))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c = x.shape[:2]
        avg = x.mean(dim=(2, 3))
        peak = x.amax(dim=(2, 3))
        gate = torch.sigmoid(self._mlp(avg) + self._mlp(peak)).view(b, c, 1, 1)
        return x * gate


class SpatialAttention(nn.Module):
    """Gate positions with a 7x7 convolution over [channel-mean; channel-max]."""

    def __init__(self, kernel_size: int = 7):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel_size, padding=kernel_size // 2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        avg = x.mean(dim=1, keepdim=True)
        peak = x.amax(dim=1, keepdim=True)
        gate = torch.sigmoid(self.conv(torch.cat([avg, peak], dim=1)))
        return x * gate


class ChannelSpatialAttention(nn.Module):
    """Channel attention followed by spatial attention; preserves shape."""

    def __init__(self, channels: int, reduction: int = 16):
        super().__init__()
        self.channels = channels
        self.channel = ChannelAttention(channels, reduction)
        self.spatial = SpatialAttention()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.channels:
            raise ValueError(
                f"attention built for {self.channels} channels, input has {x.shape[1]}"
            )
        return self.spatial(self.channel(x))


def make_attention(channels: int, enabled: bool = True, reduction: int = 16) -> nn.Module:
    """Attention layer, or identity when the ablation disables it."""
    if not enabled:
        return nn.Identity()
    return ChannelSpatialAttention(channels, reduction)
