"""Learned re-weighting of the three per-scale sub-descriptors."""

import torch
import torch.nn as nn
import torch.nn.functional as F


def global_stats(descriptor: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-row mean and max of a (..., 3, N) stacked descriptor."""
    if descriptor.shape[-1] < 1:
        raise ValueError("descriptor rows must be non-empty")
    return descriptor.mean(dim=-1), descriptor.amax(dim=-1)


class DescriptorReweighter(nn.Module):
    """Blend sub-descriptor rows with weights learned from their global stats.

    Two independent 3 -> hidden -> 3 MLPs score the average and maximum
    statistics; their summed scores pass through a softmax so the three
    weights are positive and sum to one.  The refined descriptor is the
    weighted row sum, optionally L2-normalized.

    `max_stats_both_branches` feeds the max statistics into both MLPs
    instead of (avg, max) respectively.
    """

    def __init__(
        self,
        rows: int = 3,
        hidden: int = 12,
        normalize_output: bool = True,
        max_stats_both_branches: bool = False,
    ):
        super().__init__()
        self.rows = rows
        self.normalize_output = normalize_output
        self.max_stats_both_branches = max_stats_both_branches
        self.avg_fc1 = nn.Linear(rows, hidden)
        self.avg_fc2 = nn.Linear(hidden, rows)
        self.max_fc1 = nn.Linear(rows, hidden)
        self.max_fc2 = nn.Linear(hidden, rows)

    def compute_weights(
        self, g_avg: torch.Tensor, g_max: torch.Tensor
    ) -> torch.Tensor:
        """(..., 3) global stats -> (..., 3) convex weights."""
        first = g_max if self.max_stats_both_branches else g_avg
        w_avg = self.avg_fc2(F.relu(self.avg_fc1(first)))
        w_max = self.max_fc2(F.relu(self.max_fc1(g_max)))
        return F.softmax(w_avg + w_max, dim=-1)

    def forward(self, descriptor: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """(..., 3, N) stacked sub-descriptors -> (refined (..., N), weights (..., 3))."""
        if descriptor.shape[-2] != self.rows:
            raise ValueError(
                f"expected {self.rows} sub-descriptor rows, got {descriptor.shape[-2]}"
            )
        g_avg, g_max = global_stats(descriptor)
        weights = self.compute_weights(g_avg, g_max)
        refined = reweight(descriptor, weights, normalize=self.normalize_output)
        return refined, weights


def reweight(
    descriptor: torch.Tensor, weights: torch.Tensor, normalize: bool = True
) -> torch.Tensor:
    """Weighted sum of descriptor rows: (..., R, N) x (..., R) -> (..., N)."""
    if weights.shape[-1] != descriptor.shape[-2]:
        raise ValueError(
            f"{weights.shape[-1]} weights for {descriptor.shape[-2]} rows"
        )
    combined = (descriptor * weights.unsqueeze(-1)).sum(dim=-2)
    if normalize:
        combined = F.normalize(combined, p=2, dim=-1)
    return combined
