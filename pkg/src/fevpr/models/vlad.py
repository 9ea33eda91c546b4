"""Trainable VLAD aggregation of feature maps into fixed-length descriptors."""

import torch
import torch.nn as nn
import torch.nn.functional as F


class VladAggregator(nn.Module):
    """Soft-assignment VLAD over the spatial positions of a feature map.

    Every position is a C-dim local feature x; assignment weights are a
    softmax over per-cluster affine scores (w_k . x + b_k), and the output
    stacks the assignment-weighted residual sums against each center,
    intra-normalized per cluster and L2-normalized overall.  Output length
    is clusters x C.
    """

    def __init__(self, clusters: int, dim: int, intra_norm: bool = True):
        super().__init__()
        if clusters < 1:
            raise ValueError(f"clusters must be >= 1, got {clusters}")
        self.clusters = clusters
        self.dim = dim
        self.intra_norm = intra_norm
        self.centers = nn.Parameter(torch.randn(clusters, dim) / dim ** 0.5)
        self.assign_weight = nn.Parameter(torch.randn(clusters, dim) / dim ** 0.5)
        self.assign_bias = nn.Parameter(torch.zeros(clusters))

    @property
    def output_dim(self) -> int:
        return self.clusters * self.dim

    def init_from_centers(self, centers: torch.Tensor, alpha: float):
        """Set centers and the matching soft-assignment projection.

        With weight 2*alpha*c_k and bias -alpha*|c_k|^2 the assignment score
        equals alpha * (|x|^2 - |x - c_k|^2) up to a shared constant, so the
        softmax prefers the nearest center with sharpness alpha.
        """
        with torch.no_grad():
            centers = centers.to(self.centers.dtype)
            self.centers.copy_(centers)
            self.assign_weight.copy_(2.0 * alpha * centers)
            self.assign_bias.copy_(-alpha * (centers ** 2).sum(dim=1))

    def soft_assignment(self, features: torch.Tensor) -> torch.Tensor:
        """(B, C, S) features -> (B, K, S) assignment weights, columns sum to 1."""
        scores = torch.einsum("kc,bcs->bks", self.assign_weight, features)
        scores = scores + self.assign_bias[None, :, None]
        return F.softmax(scores, dim=1)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        """Aggregate (B, C, H, W) maps or (B, C, S) position lists to (B, K*C)."""
        if features.dim() == 4:
            features = features.flatten(2)
        if features.dim() != 3 or features.shape[1] != self.dim:
            raise ValueError(
                f"expected (B, {self.dim}, ...) features, got {tuple(features.shape)}"
            )
        assign = self.soft_assignment(features)  # (B, K, S)
        weighted = torch.einsum("bks,bcs->bkc", assign, features)
        mass = assign.sum(dim=2)  # (B, K)
        vlad = weighted - mass.unsqueeze(2) * self.centers.unsqueeze(0)
        if self.intra_norm:
            vlad = F.normalize(vlad, p=2, dim=2)
        return F.normalize(vlad.flatten(1), p=2, dim=1)


def concat_descriptors(*subs: torch.Tensor) -> torch.Tensor:
    """Stack equal-length sub-descriptors as rows: (B, N) each -> (B, 3, N)."""
    lengths = {s.shape[-1] for s in subs}
    if len(lengths) != 1:
        raise ValueError(f"sub-descriptor lengths differ: {sorted(lengths)}")
    return torch.stack(subs, dim=-2)


def flatten_concat(*maps: torch.Tensor) -> torch.Tensor:
    """Flatten feature maps spatially and join along positions: -> (B, C, sum HiWi).

    The ablation path that feeds all scales to one VLAD layer instead of
    per-scale aggregation plus re-weighting.
    """
    channels = {m.shape[-3] for m in maps}
    if len(channels) != 1:
        raise ValueError(f"channel counts differ: {sorted(channels)}")
    return torch.cat([m.flatten(-2) for m in maps], dim=-1)
