import numpy as np
import pytest
import torch

from fevpr.models.two_stream import StreamEncoder, TwoStreamEncoder, fuse


class TestStreamEncoder:
    def test_output_geometry_256(self):
        torch.manual_seed(0)
        enc = StreamEncoder(in_channels=1, width=64)
        enc.eval()
        with torch.no_grad():
            out = enc(torch.zeros(1, 1, 256, 256))
        assert out.shape == (1, 64, 64, 64)

    def test_event_stream_two_channels(self):
        torch.manual_seed(0)
        enc = StreamEncoder(in_channels=2, width=16)
        enc.eval()
        with torch.no_grad():
            out = enc(torch.zeros(1, 2, 64, 64))
        assert out.shape == (1, 16, 16, 16)

    def test_zero_input_zero_biases_gives_zero(self):
        torch.manual_seed(0)
        enc = StreamEncoder(in_channels=1, width=8)
        with torch.no_grad():
            for name, p in enc.named_parameters():
                if "bias" in name:
                    p.zero_()
        enc.eval()
        with torch.no_grad():
            out = enc(torch.zeros(1, 1, 32, 32))
        torch.testing.assert_close(out, torch.zeros_like(out))

    def test_inference_determinism(self, rng):
        torch.manual_seed(1)
        enc = StreamEncoder(in_channels=1, width=8)
        enc.eval()
        x = torch.from_numpy(rng.random((2, 1, 32, 32)).astype(np.float32))
        with torch.no_grad():
            a, b = enc(x), enc(x)
        torch.testing.assert_close(a, b)

    def test_wrong_channel_count(self):
        enc = StreamEncoder(in_channels=1, width=8)
        with pytest.raises(ValueError, match="channel"):
            enc(torch.zeros(1, 2, 32, 32))

    def test_indivisible_size_rejected(self):
        enc = StreamEncoder(in_channels=1, width=8)
        with pytest.raises(ValueError, match="divisible"):
            enc(torch.zeros(1, 1, 30, 30))


class TestFusion:
    def test_concat_order_and_shape(self, rng):
        xf = torch.from_numpy(rng.random((1, 64, 64, 64)).astype(np.float32))
        xe = torch.from_numpy(rng.random((1, 64, 64, 64)).astype(np.float32))
        hybrid = fuse(xf, xe)
        assert hybrid.shape == (1, 128, 64, 64)
        torch.testing.assert_close(hybrid[:, 0], xf[:, 0])
        torch.testing.assert_close(hybrid[:, 64], xe[:, 0])

    def test_spatial_mismatch(self, rng):
        with pytest.raises(ValueError, match="spatial"):
            fuse(torch.zeros(1, 8, 4, 4), torch.zeros(1, 8, 8, 8))


class TestTwoStreamEncoder:
    def test_both_mode_hybrid_width(self):
        torch.manual_seed(0)
        two = TwoStreamEncoder(width=8)
        two.eval()
        with torch.no_grad():
            out = two(torch.zeros(1, 1, 32, 32), torch.zeros(1, 2, 32, 32))
        assert out.shape == (1, 16, 8, 8)
        assert two.hybrid_channels == 16

    @pytest.mark.parametrize("mode", ["frame_only", "event_only"])
    def test_single_modality_modes(self, mode):
        torch.manual_seed(0)
        two = TwoStreamEncoder(width=8, mode=mode)
        two.eval()
        with torch.no_grad():
            out = two(torch.zeros(1, 1, 32, 32), torch.zeros(1, 2, 32, 32))
        assert out.shape == (1, 8, 8, 8)
        assert two.hybrid_channels == 8

    def test_streams_are_independent(self, rng):
        """Swapping the modality inputs changes the output."""
        torch.manual_seed(2)
        two = TwoStreamEncoder(width=8, frame_channels=2)
        two.eval()
        a = torch.from_numpy(rng.random((1, 2, 32, 32)).astype(np.float32))
        b = torch.from_numpy(rng.random((1, 2, 32, 32)).astype(np.float32))
        with torch.no_grad():
            normal = two(a, b)
            swapped = two(b, a)
        assert not torch.allclose(normal, swapped)

    def test_gradients_reach_both_streams(self, rng):
        torch.manual_seed(3)
        two = TwoStreamEncoder(width=8)
        frame = torch.from_numpy(rng.random((1, 1, 32, 32)).astype(np.float32))
        events = torch.from_numpy(rng.random((1, 2, 32, 32)).astype(np.float32))
        out = two(frame, events)
        (out ** 2).sum().backward()
        frame_grads = [p.grad for p in two.frame_encoder.parameters() if p.grad is not None]
        event_grads = [p.grad for p in two.event_encoder.parameters() if p.grad is not None]
        assert any(g.abs().sum() > 0 for g in frame_grads)
        assert any(g.abs().sum() > 0 for g in event_grads)
