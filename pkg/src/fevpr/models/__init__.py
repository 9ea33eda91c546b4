from .attention import ChannelAttention, ChannelSpatialAttention, SpatialAttention, make_attention
from .network import DescriptorNetwork, load_backbone_weights
from .pyramid import BackboneStages, LateralFusion, SingleScaleHead
from .reweight import DescriptorReweighter, global_stats, reweight
from .two_stream import BasicBlock, StreamEncoder, TwoStreamEncoder, fuse
from .vlad import VladAggregator, concat_descriptors, flatten_concat

__all__ = [
    "BackboneStages",
    "BasicBlock",
    "ChannelAttention",
    "ChannelSpatialAttention",
    "DescriptorNetwork",
    "DescriptorReweighter",
    "LateralFusion",
    "SingleScaleHead",
    "SpatialAttention",
    "StreamEncoder",
    "TwoStreamEncoder",
    "VladAggregator",
    "concat_descriptors",
    "flatten_concat",
    "fuse",
    "global_stats",
    "load_backbone_weights",
    "make_attention",
    "reweight",
]
