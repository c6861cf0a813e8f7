"""Tests for chart and numeric branch encoders."""

import numpy as np
import pytest
from pydantic import ValidationError

from src.config import ModelConfig
from src.encoders import (
    DeepCNN,
    EncoderConfig,
    FCNEncoder,
    OSCNNEncoder,
    ShallowCNN,
    TransformerEncoder,
    build_encoder,
    oscnn_kernel_sizes,
    sinusoidal_encoding,
)
from src.nn.tensor import ShapeError, Tensor


def images(n, resolution, seed=0):
    return Tensor(np.random.default_rng(seed).random((n, 3, resolution, resolution)))


def series(n, length, seed=0):
    return Tensor(np.random.default_rng(seed).normal(size=(n, length)))


class TestChartCNNs:
    """Tests for the shallow and deep image backbones."""

    @pytest.mark.parametrize("cls,expected", [(ShallowCNN, 286_016), (DeepCNN, 1_049_728)])
    def test_parameter_counts_at_64(self, cls, expected):
        assert cls(64, np.random.default_rng(0)).num_parameters() == expected

    def test_shallow_output(self):
        encoder = ShallowCNN(32, np.random.default_rng(0))
        out = encoder(images(4, 32))
        assert out.shape == (4, 64)
        assert encoder.feature_shape == (64, 4, 4)

    def test_deep_output(self):
        encoder = DeepCNN(32, np.random.default_rng(0))
        out = encoder(images(2, 32))
        assert out.shape == (2, 256)
        assert encoder.feature_shape == (256, 1, 1)

    @pytest.mark.parametrize("cls,resolution", [(ShallowCNN, 20), (DeepCNN, 48)])
    def test_indivisible_resolution(self, cls, resolution):
        with pytest.raises(ShapeError):
            cls(resolution, np.random.default_rng(0))

    def test_wrong_image_shape(self):
        encoder = ShallowCNN(32, np.random.default_rng(0))
        with pytest.raises(ShapeError):
            encoder(images(2, 16))

    def test_same_seed_same_weights(self):
        a = DeepCNN(32, np.random.default_rng(7))
        b = DeepCNN(32, np.random.default_rng(7))
        for (_, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
            np.testing.assert_array_equal(pa.data, pb.data)


class TestNumericEncoders:
    """Tests for FCN, Transformer and OS-CNN encoders."""

    def test_fcn(self):
        encoder = FCNEncoder(20, np.random.default_rng(0), hidden=16, output_dim=8)
        assert encoder(series(3, 20)).shape == (3, 8)
        with pytest.raises(ShapeError):
            encoder(series(3, 21))

    def test_single_series_is_batched(self):
        encoder = FCNEncoder(10, np.random.default_rng(0), hidden=4, output_dim=4)
        assert encoder(Tensor(np.zeros(10))).shape == (1, 4)

    @pytest.mark.parametrize("positional", [True, False])
    def test_transformer_any_length(self, positional):
        encoder = TransformerEncoder(
            np.random.default_rng(0), output_dim=8, d_model=8, heads=2, layers=1, positional_encoding=positional
        )
        assert encoder(series(2, 15)).shape == (2, 8)
        assert encoder(series(2, 31)).shape == (2, 8)

    def test_positional_table(self):
        table = sinusoidal_encoding(5, 6)
        assert table.shape == (5, 6)
        np.testing.assert_allclose(table[0, 0::2], 0.0)
        np.testing.assert_allclose(table[0, 1::2], 1.0)

    def test_transformer_is_order_sensitive_with_positions(self):
        encoder = TransformerEncoder(np.random.default_rng(1), output_dim=4, d_model=4, heads=2, layers=1)
        x = np.random.default_rng(2).normal(size=(1, 12))
        forward = encoder(Tensor(x)).data
        reverse = encoder(Tensor(x[:, ::-1].copy())).data
        assert not np.allclose(forward, reverse)

    def test_transformer_without_positions_ignores_order(self):
        encoder = TransformerEncoder(
            np.random.default_rng(1), output_dim=4, d_model=4, heads=2, layers=1, positional_encoding=False
        )
        x = np.random.default_rng(2).normal(size=(1, 12))
        forward = encoder(Tensor(x)).data
        reverse = encoder(Tensor(x[:, ::-1].copy())).data
        np.testing.assert_allclose(forward, reverse, rtol=1e-4, atol=1e-6)

    @pytest.mark.parametrize(
        "length,max_kernel,expected",
        [(24, 23, [1, 2, 3, 5, 7, 11, 13, 17, 19, 23]), (10, 23, [1, 2, 3, 5, 7]), (1, 23, [1]), (100, 5, [1, 2, 3, 5])],
    )
    def test_oscnn_kernel_sizes(self, length, max_kernel, expected):
        assert oscnn_kernel_sizes(length, max_kernel) == expected

    def test_oscnn_output(self):
        encoder = OSCNNEncoder(12, np.random.default_rng(0), output_dim=6, channels=2, max_kernel=7)
        assert encoder.kernel_sizes == [1, 2, 3, 5, 7]
        assert encoder.stack1.out_channels == 10
        assert encoder(series(4, 12)).shape == (4, 6)


class TestEncoderConfig:
    """Tests for the encoder factory."""

    @pytest.mark.parametrize(
        "kind,input_size,batch,dim",
        [
            ("shallow_cnn", 16, images(2, 16), 64),
            ("deep_cnn", 32, images(2, 32), 256),
            ("fcn", 14, series(2, 14), 8),
            ("transformer", 14, series(2, 14), 8),
            ("oscnn", 14, series(2, 14), 8),
        ],
    )
    def test_build_encoder(self, kind, input_size, batch, dim, tiny_model):
        config = EncoderConfig.from_model_config(kind, input_size, tiny_model)
        encoder = build_encoder(config, np.random.default_rng(0))
        assert config.output_dim == dim
        assert encoder(batch).shape == (2, dim)

    def test_rejects_bad_resolution(self):
        with pytest.raises(ValidationError):
            EncoderConfig(kind="deep_cnn", input_size=48)

    def test_rejects_heads_not_dividing(self):
        with pytest.raises(ValidationError):
            EncoderConfig(kind="transformer", input_size=10, d_model=10, heads=4)

    def test_model_config_heads_check(self):
        with pytest.raises(ValidationError):
            ModelConfig(d_model=10, heads=4)
