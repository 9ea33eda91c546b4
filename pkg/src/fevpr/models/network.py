"""The end-to-end place-descriptor network and its ablation variants."""

from __future__ import annotations

import logging

import torch
import torch.nn as nn

from ..config import TrainConfig
from .pyramid import BackboneStages, LateralFusion, SingleScaleHead
from .reweight import DescriptorReweighter
from .two_stream import TwoStreamEncoder
from .vlad import VladAggregator, concat_descriptors, flatten_concat

log = logging.getLogger(__name__)

# named ablation scale (at 256 input) -> backbone stage index
SCALE_TO_STAGE = {32: 1, 16: 2, 8: 3}


def init_conv_weights(module: nn.Module):
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            nn.init.kaiming_normal_(m.weight, mode="fan_out", nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


class DescriptorNetwork(nn.Module):
    """Two-stream encoder -> stages -> pyramid -> per-scale VLAD -> re-weighting.

    Ablation switches select single-modality encoding, a single pyramid
    scale, attention-free variants, or the flatten-and-concatenate path
    that feeds one VLAD layer with all scales' positions.
    """

    def __init__(
        self,
        width: int = 64,
        clusters: int = 128,
        frame_channels: int = 1,
        mode: str = "both",
        single_scale: int | None = None,
        flatten_concat: bool = False,
        attention: bool = True,
        attention_reduction: int = 16,
        intra_norm: bool = True,
        final_norm: bool = True,
        upsample: str = "nearest",
        max_stats_both_branches: bool = False,
    ):
        super().__init__()
        if single_scale is not None and single_scale not in SCALE_TO_STAGE:
            raise ValueError(f"single_scale must be one of {sorted(SCALE_TO_STAGE)}")
        if flatten_concat and single_scale is not None:
            raise ValueError("flatten_concat and single_scale are mutually exclusive")
        self.single_scale = single_scale
        self.use_flatten_concat = flatten_concat
        self.final_norm = final_norm

        self.two_stream = TwoStreamEncoder(
            width=width,
            frame_channels=frame_channels,
            mode=mode,
            attention=attention,
            attention_reduction=attention_reduction,
        )
        self.stages = BackboneStages(
            in_channels=self.two_stream.hybrid_channels,
            width=width,
            attention=attention,
            attention_reduction=attention_reduction,
        )
        pyramid_channels = 4 * width
        self.pyramid_channels = pyramid_channels

        if single_scale is not None:
            stage = SCALE_TO_STAGE[single_scale]
            self.scale_head = SingleScaleHead(
                self.stages.stage_channels[stage - 1], pyramid_channels
            )
            self.fusion = None
            self.vlads = nn.ModuleList([VladAggregator(clusters, pyramid_channels, intra_norm)])
            self.reweighter = None
        elif flatten_concat:
            self.scale_head = None
            self.fusion = LateralFusion(self.stages.stage_channels, pyramid_channels, upsample)
            self.vlads = nn.ModuleList([VladAggregator(clusters, pyramid_channels, intra_norm)])
            self.reweighter = None
        else:
            self.scale_head = None
            self.fusion = LateralFusion(self.stages.stage_channels, pyramid_channels, upsample)
            self.vlads = nn.ModuleList(
                [VladAggregator(clusters, pyramid_channels, intra_norm) for _ in range(3)]
            )
            self.reweighter = DescriptorReweighter(
                normalize_output=final_norm,
                max_stats_both_branches=max_stats_both_branches,
            )
        init_conv_weights(self)

    @classmethod
    def from_config(cls, config: TrainConfig) -> "DescriptorNetwork":
        mode = "both"
        if config.frame_only:
            mode = "frame_only"
        elif config.event_only:
            mode = "event_only"
        return cls(
            width=config.base_width,
            clusters=config.clusters,
            frame_channels=config.frame_channels,
            mode=mode,
            single_scale=config.single_scale,
            flatten_concat=config.flatten_concat,
            attention=not config.no_attention,
            attention_reduction=config.attention_reduction,
            intra_norm=config.intra_norm,
            final_norm=config.final_norm,
            upsample=config.upsample,
            max_stats_both_branches=config.max_stats_both_branches,
        )

    @property
    def descriptor_dim(self) -> int:
        return self.vlads[0].output_dim

    def _normalize(self, descriptor: torch.Tensor) -> torch.Tensor:
        if self.final_norm:
            return nn.functional.normalize(descriptor, p=2, dim=-1)
        return descriptor

    def forward(
        self,
        frame: torch.Tensor,
        event_frame: torch.Tensor,
        return_parts: bool = False,
    ):
        parts: dict = {}
        hybrid = self.two_stream(frame, event_frame)
        parts["hybrid"] = hybrid

        if self.single_scale is not None:
            stage_index = SCALE_TO_STAGE[self.single_scale]
            s1, s2, s3 = self.stages(hybrid)
            parts["stages"] = (s1, s2, s3)
            feature_map = self.scale_head((s1, s2, s3)[stage_index - 1])
            parts["pyramid"] = (feature_map,)
            descriptor = self.vlads[0](feature_map)
        else:
            s1, s2, s3 = self.stages(hybrid)
            parts["stages"] = (s1, s2, s3)
            m1, m2, m3 = self.fusion(s1, s2, s3)
            parts["pyramid"] = (m1, m2, m3)
            if self.use_flatten_concat:
                positions = flatten_concat(m1, m2, m3)
                parts["flattened"] = positions
                descriptor = self.vlads[0](positions)
            else:
                subs = [vlad(m) for vlad, m in zip(self.vlads, (m1, m2, m3))]
                parts["subs"] = subs
                stacked = concat_descriptors(*subs)
                parts["stacked"] = stacked
                descriptor, weights = self.reweighter(stacked)
                parts["weights"] = weights
                if return_parts:
                    parts["descriptor"] = descriptor
                return (descriptor, parts) if return_parts else descriptor

        descriptor = self._normalize(descriptor)
        if return_parts:
            parts["descriptor"] = descriptor
            return descriptor, parts
        return descriptor


def load_backbone_weights(model: DescriptorNetwork, path: str) -> tuple[int, int]:
    """Load a partial state dict (e.g. pretrained stage weights); returns (matched, total)."""
    state = torch.load(path, map_location="cpu", weights_only=True)
    own = model.state_dict()
    matched = {
        k: v for k, v in state.items() if k in own and own[k].shape == v.shape
    }
    model.load_state_dict(matched, strict=False)
    log.info("loaded %d/%d tensors from %s", len(matched), len(own), path)
    return len(matched), len(own)
