import numpy as np
import pytest
import torch

from dcenet.model import (
    DceNet,
    DceNetConfig,
    ShapeError,
    SpatialAttention,
    gaussian_interp_weights,
)


def micro_config(**overrides):
    base = dict(
        n_rx=2, n_tx=2, n_symbols=4, n_subcarriers=4, k_dmrs=2, n_p_per_symbol=2,
        d=16, d_ff=16, n_heads=2, n_encoders=1,
    )
    base.update(overrides)
    return DceNetConfig(**base)


class TestConfig:
    def test_seq_len(self):
        cfg = micro_config()
        assert cfg.seq_len == 2 * 4 * 4

    def test_heads_must_divide(self):
        with pytest.raises(ValueError, match="divisible"):
            micro_config(d=10, n_heads=3)

    def test_positive_dims(self):
        with pytest.raises(ValueError):
            micro_config(d=0)


class TestInterpolation:
    def test_rows_are_convex_weights(self):
        cfg = micro_config()
        weights, _, _ = gaussian_interp_weights(cfg)
        assert np.all(weights >= 0)
        assert np.allclose(weights.sum(axis=2), 1.0, atol=1e-12)

    def test_constant_channel_preserved(self):
        # convex combinations of a constant reproduce the constant
        cfg = micro_config()
        model = DceNet(cfg)
        value = 0.4 - 0.9j
        ls = torch.zeros(1, 2, 2, cfg.k_dmrs * cfg.n_p_per_symbol, 2)
        ls[..., 0] = value.real
        ls[..., 1] = value.imag
        grid = model.interpolate_grid(ls)
        assert torch.allclose(grid[..., 0, :, :], torch.full_like(grid[..., 0, :, :], value.real), atol=1e-6)
        assert torch.allclose(grid[..., 1, :, :], torch.full_like(grid[..., 1, :, :], value.imag), atol=1e-6)

    def test_single_pilot_broadcasts(self):
        cfg = micro_config(n_rx=1, n_tx=1, k_dmrs=1, n_p_per_symbol=1, n_symbols=3, n_subcarriers=3)
        model = DceNet(cfg)
        ls = torch.tensor([[[[[0.8, -0.2]]]]])
        grid = model.interpolate_grid(ls)
        assert torch.allclose(grid[..., 0, :, :], torch.tensor(0.8), atol=1e-6)
        assert torch.allclose(grid[..., 1, :, :], torch.tensor(-0.2), atol=1e-6)

    def test_huge_bandwidth_tends_to_pilot_mean(self):
        cfg = micro_config(interp_bandwidth=1e6)
        weights, data_idx, pilot_idx = gaussian_interp_weights(cfg)
        n_pil = weights.shape[2]
        assert np.allclose(weights, 1.0 / n_pil, atol=1e-9)


class TestSpatialAttention:
    def test_forced_open_gate_is_identity(self):
        sa = SpatialAttention()
        with torch.no_grad():
            sa.conv.weight.zero_()
            sa.conv.bias.fill_(1e4)  # sigmoid saturates at 1
        x = torch.randn(3, 8, 2, 2)
        assert torch.allclose(sa(x), x)

    def test_single_antenna_pooling_degenerate(self):
        sa = SpatialAttention()
        x = torch.randn(2, 8, 1, 1)
        collect = {}
        sa(x, collect)
        assert collect["x_mean"] == (2, 1, 1, 1)
        assert collect["x_max"] == (2, 1, 1, 1)

    def test_gate_bounded(self):
        sa = SpatialAttention()
        x = torch.randn(4, 8, 2, 2) * 10
        out = sa(x)
        assert torch.all(out.abs() <= x.abs() + 1e-6)

    def test_conv_param_count(self):
        sa = SpatialAttention()
        assert sum(p.numel() for p in sa.conv.parameters()) == 99


class TestForward:
    def test_output_shape_and_finite(self):
        cfg = micro_config()
        model = DceNet(cfg)
        ls = torch.randn(3, 2, 2, 4, 2)
        out = model(ls)
        assert out.shape == (3, 2, 2, 2, 4, 4)
        assert torch.isfinite(out).all()

    def test_named_stage_shapes(self):
        cfg = micro_config()
        model = DceNet(cfg)
        b = 2
        shapes = {}
        model(torch.randn(b, 2, 2, 4, 2), collect=shapes)
        L = cfg.seq_len
        assert shapes["h_out_6d"] == (b, 2, 2, 2, 4, 4)
        assert shapes["x_bar"] == (b, 2, 2, L)
        assert shapes["x"] == (b, cfg.d, 2, 2)
        assert shapes["x_mean"] == (b, 1, 2, 2)
        assert shapes["x_max"] == (b, 1, 2, 2)
        assert shapes["x_tfa"] == (L, b, 2, 2)
        assert shapes["x_bar_tfa"] == (L, b, cfg.d)
        assert shapes["output"] == (b, 2, 2, 2, 4, 4)

    def test_untrained_equals_interpolation_baseline(self):
        cfg = micro_config()
        torch.manual_seed(1)
        model = DceNet(cfg)
        ls = torch.randn(4, 2, 2, 4, 2)
        with torch.no_grad():
            assert torch.allclose(model(ls), model.interpolate_grid(ls), atol=1e-6)

    def test_batch_equivariance(self):
        cfg = micro_config()
        torch.manual_seed(2)
        model = DceNet(cfg).eval()
        ls = torch.randn(4, 2, 2, 4, 2)
        perm = torch.tensor([2, 0, 3, 1])
        with torch.no_grad():
            out = model(ls)
            out_perm = model(ls[perm])
        assert torch.allclose(out[perm], out_perm, atol=1e-5)

    def test_wrong_input_shape_raises(self):
        model = DceNet(micro_config())
        with pytest.raises(ShapeError, match="preprocess.ls"):
            model(torch.randn(2, 2, 2, 3, 2))

    def test_attention_rows_sum_to_one(self):
        cfg = micro_config()
        torch.manual_seed(3)
        model = DceNet(cfg).eval()
        captured = {}

        def grab(module, inputs):
            captured["z"] = inputs[0].detach()

        handle = model.encoders[0].register_forward_pre_hook(grab)
        with torch.no_grad():
            model(torch.randn(2, 2, 2, 4, 2))
        handle.remove()
        z = captured["z"]
        attn = model.encoders[0].self_attn
        with torch.no_grad():
            _, weights = attn(z, z, z, need_weights=True, average_attn_weights=False)
        assert weights.shape[-1] == cfg.seq_len
        assert torch.allclose(weights.sum(dim=-1), torch.ones_like(weights.sum(dim=-1)), atol=1e-6)

    def test_pilot_res_carry_ls_values(self):
        # the combined grid holds the raw LS values at each port's pilots
        cfg = micro_config()
        torch.manual_seed(4)
        model = DceNet(cfg)
        ls = torch.randn(2, 2, 2, 4, 2)
        with torch.no_grad():
            combined = model.preprocess(ls)
        layout = cfg.layout()
        flat = combined.reshape(2, 2, 2, 2, -1)
        for port in range(cfg.n_tx):
            idx = torch.from_numpy(layout.port_flat_indices(port, cfg.n_subcarriers))
            got = flat[:, :, port, :, idx]
            want = ls[:, :, port].permute(0, 1, 3, 2)
            assert torch.allclose(got, want, atol=1e-6)
