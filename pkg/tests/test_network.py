import numpy as np
import pytest
import torch

from fevpr.config import TrainConfig
from fevpr.models.network import DescriptorNetwork


def tiny_net(**kwargs):
    torch.manual_seed(0)
    defaults = dict(width=8, clusters=4)
    defaults.update(kwargs)
    net = DescriptorNetwork(**defaults)
    net.eval()
    return net


def tiny_inputs(batch=1, size=32):
    return torch.rand(batch, 1, size, size), torch.rand(batch, 2, size, size)


class TestDefaultWiring:
    def test_descriptor_dimension(self):
        net = tiny_net()
        assert net.descriptor_dim == 4 * 32  # K x pyramid channels

    def test_forward_and_parts(self):
        net = tiny_net()
        frame, events = tiny_inputs(size=64)
        with torch.no_grad():
            desc, parts = net(frame, events, return_parts=True)
        assert desc.shape == (1, 128)
        assert parts["hybrid"].shape == (1, 16, 16, 16)
        s1, s2, s3 = parts["stages"]
        assert s1.shape == (1, 16, 8, 8)
        assert s2.shape == (1, 32, 4, 4)
        assert s3.shape == (1, 64, 2, 2)
        m1, m2, m3 = parts["pyramid"]
        assert m1.shape == (1, 32, 2, 2)
        assert m3.shape == (1, 32, 8, 8)
        assert parts["stacked"].shape == (1, 3, 128)
        assert parts["weights"].shape == (1, 3)
        torch.testing.assert_close(parts["weights"].sum(-1), torch.ones(1))

    def test_unit_norm_descriptor(self):
        net = tiny_net()
        frame, events = tiny_inputs(batch=3, size=32)
        with torch.no_grad():
            desc = net(frame, events)
        torch.testing.assert_close(desc.norm(dim=1), torch.ones(3), atol=1e-5, rtol=0)

    def test_from_config_round_trip(self):
        config = TrainConfig(base_width=8, clusters=4, input_size=32).validate()
        net = DescriptorNetwork.from_config(config)
        assert net.descriptor_dim == 4 * 32


class TestAblationWiring:
    @pytest.mark.parametrize("mode", ["frame_only", "event_only"])
    def test_single_modality(self, mode):
        net = tiny_net(mode=mode)
        frame, events = tiny_inputs(size=32)
        with torch.no_grad():
            desc, parts = net(frame, events, return_parts=True)
        assert parts["hybrid"].shape[1] == 8  # un-fused width
        assert desc.shape == (1, 128)

    @pytest.mark.parametrize("scale,expect_hw", [(8, 1), (16, 2), (32, 4)])
    def test_single_scale(self, scale, expect_hw):
        net = tiny_net(single_scale=scale)
        frame, events = tiny_inputs(size=32)
        with torch.no_grad():
            desc, parts = net(frame, events, return_parts=True)
        (fmap,) = parts["pyramid"]
        assert fmap.shape == (1, 32, expect_hw, expect_hw)
        assert desc.shape == (1, 128)
        assert net.reweighter is None

    def test_flatten_concat(self):
        net = tiny_net(flatten_concat=True)
        frame, events = tiny_inputs(size=32)
        with torch.no_grad():
            desc, parts = net(frame, events, return_parts=True)
        # positions from 1x1 + 2x2 + 4x4 maps
        assert parts["flattened"].shape == (1, 32, 1 + 4 + 16)
        assert desc.shape == (1, 128)
        assert len(net.vlads) == 1

    def test_no_attention_keeps_contracts(self):
        net = tiny_net(attention=False)
        frame, events = tiny_inputs(size=32)
        with torch.no_grad():
            desc = net(frame, events)
        assert desc.shape == (1, 128)

    def test_conflicting_switches_rejected(self):
        with pytest.raises(ValueError):
            tiny_net(single_scale=8, flatten_concat=True)
        with pytest.raises(ValueError):
            tiny_net(single_scale=9)

    def test_modalities_affect_descriptor_only_in_their_mode(self, rng):
        frame, events = tiny_inputs(size=32)
        other_events = torch.rand_like(events)
        net = tiny_net(mode="frame_only")
        with torch.no_grad():
            torch.testing.assert_close(net(frame, events), net(frame, other_events))
        net = tiny_net(mode="event_only")
        other_frame = torch.rand_like(frame)
        with torch.no_grad():
            torch.testing.assert_close(net(frame, events), net(other_frame, events))


class TestDefaultGeometryContracts:
    """Full-width shape chain at the default 256x256 input."""

    @pytest.mark.slow
    def test_paper_scale_shapes(self):
        torch.manual_seed(0)
        net = DescriptorNetwork(width=64, clusters=128)
        net.eval()
        with torch.no_grad():
            desc, parts = net(
                torch.zeros(1, 1, 256, 256), torch.zeros(1, 2, 256, 256),
                return_parts=True,
            )
        assert parts["hybrid"].shape == (1, 128, 64, 64)
        s1, s2, s3 = parts["stages"]
        assert (s1.shape, s2.shape, s3.shape) == (
            (1, 128, 32, 32), (1, 256, 16, 16), (1, 512, 8, 8))
        m1, m2, m3 = parts["pyramid"]
        assert (m1.shape, m2.shape, m3.shape) == (
            (1, 256, 8, 8), (1, 256, 16, 16), (1, 256, 32, 32))
        assert parts["stacked"].shape == (1, 3, 32768)
        assert desc.shape == (1, 32768)
