"""Dual feature streams: shapes, zero cases, and residual reductions."""

import numpy as np
import pytest
import torch

from kanseg import ops
from kanseg.encoders import (BasicBlock, ConvEncoder, ResidualEncoder,
                             fuse_features, residual_encoder_output_size,
                             scaled_widths)
from kanseg.errors import ConfigurationError

from oracles import adaptive_avg_pool_oracle


def test_scaled_widths():
    assert scaled_widths(1.0) == (64, 128, 256, 512)
    assert scaled_widths(0.125) == (8, 16, 32, 64)
    assert scaled_widths(1 / 64) == (1, 2, 4, 8)
    with pytest.raises(ConfigurationError):
        scaled_widths(0.0)


@pytest.mark.parametrize("size", [16, 32, 64, 96])
def test_conv_encoder_preserves_spatial_dims(size):
    enc = ConvEncoder(3, 1 / 64)
    out = enc(torch.randn(1, 3, size, size))
    assert out.shape == (1, 8, size, size)


def test_conv_encoder_odd_size():
    enc = ConvEncoder(3, 1 / 64)
    assert enc(torch.randn(1, 3, 17, 23)).shape == (1, 8, 17, 23)


def test_conv_encoder_zero_input_zero_biases():
    enc = ConvEncoder(3, 1 / 64).eval()
    with torch.no_grad():
        for m in enc.modules():
            if isinstance(m, torch.nn.Conv2d):
                m.bias.zero_()
    out = enc(torch.zeros(1, 3, 8, 8))
    assert torch.equal(out, torch.zeros(1, 8, 8, 8))


@pytest.mark.parametrize("size,expect", [(16, 1), (32, 1), (64, 2),
                                         (96, 3), (320, 10)])
def test_residual_output_size_formula(size, expect):
    assert residual_encoder_output_size(size) == expect


@pytest.mark.parametrize("size", [32, 64, 96])
def test_residual_encoder_shapes(size):
    enc = ResidualEncoder(3, 1 / 64).eval()
    out = enc(torch.randn(1, 3, size, size))
    expect = residual_encoder_output_size(size)
    assert out.shape == (1, 8, expect, expect)


def test_residual_encoder_channel_check():
    enc = ResidualEncoder(3, 1 / 64)
    with pytest.raises(ConfigurationError, match="channels"):
        enc(torch.randn(1, 4, 32, 32))


def test_basic_block_identity_shortcut_reduction():
    # Zeroing the conv path leaves relu(shortcut(x)); with the identity
    # shortcut and non-negative input that is x itself.
    block = BasicBlock(4, 4).eval()
    with torch.no_grad():
        block.conv1.weight.zero_()
        block.conv1.bias.zero_()
        block.conv2.weight.zero_()
        block.conv2.bias.zero_()
    x = torch.rand(2, 4, 5, 5)  # non-negative
    assert torch.equal(block(x), x)


def test_basic_block_projection_shortcut_reduction():
    block = BasicBlock(2, 4, stride=2).eval()
    with torch.no_grad():
        block.conv1.weight.zero_()
        block.conv1.bias.zero_()
        block.conv2.weight.zero_()
        block.conv2.bias.zero_()
    x = torch.randn(1, 2, 6, 6)
    expect = ops.relu(block.shortcut(x))
    assert torch.equal(block(x), expect)


def test_fuse_features_zero_cnn_stream():
    f_res = torch.randn(1, 8, 2, 2)
    assert torch.equal(fuse_features(f_res, torch.zeros(1, 8, 64, 64)), f_res)


def test_fuse_features_pools_to_res_grid():
    f_res = torch.randn(1, 4, 10, 10, dtype=torch.float64)
    f_cnn = torch.randn(1, 4, 320, 320, dtype=torch.float64)
    out = fuse_features(f_res, f_cnn)
    assert out.shape == (1, 4, 10, 10)
    pooled = adaptive_avg_pool_oracle(f_cnn.numpy(), 10, 10)
    np.testing.assert_allclose(out.numpy(), f_res.numpy() + pooled,
                               rtol=1e-10, atol=1e-12)


def test_fuse_features_constant_cnn_adds_v():
    f_res = torch.randn(1, 3, 2, 2, dtype=torch.float64)
    f_cnn = torch.full((1, 3, 16, 16), 2.5, dtype=torch.float64)
    out = fuse_features(f_res, f_cnn)
    np.testing.assert_allclose(out.numpy(), (f_res + 2.5).numpy(), rtol=1e-12)


def test_fuse_features_channel_mismatch():
    with pytest.raises(ConfigurationError, match="channel"):
        fuse_features(torch.zeros(1, 4, 2, 2), torch.zeros(1, 8, 4, 4))


def test_encoders_deterministic():
    enc = ResidualEncoder(3, 1 / 64).eval()
    x = torch.randn(1, 3, 32, 32)
    with torch.no_grad():
        assert torch.equal(enc(x), enc(x))
