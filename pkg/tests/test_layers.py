import numpy as np
import pytest

from pyvitac import tensor as T
from pyvitac.errors import ConfigError, ShapeError
from pyvitac.layers import (AttentionConfig, DecoderBlock, EncoderBlock, Linear,
                            MultiHeadAttention, PositionalEncoding, init_params,
                            sinusoidal_table)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


class TestParameterSet:

    def test_values_depend_only_on_seed_and_name(self):
        first = init_params(3)
        first.weight('a', (2, 2), fan_in=2)
        first.weight('b', (3, 2), fan_in=2)
        second = init_params(3)
        second.weight('b', (3, 2), fan_in=2)
        np.testing.assert_array_equal(first['b'].data, second['b'].data)
        assert not np.array_equal(init_params(4).weight('b', (3, 2), 2).data,
                                  first['b'].data)

    def test_scaled_uniform_bound(self):
        w = init_params(0).weight('w', (50, 16), fan_in=16)
        assert np.all(np.abs(w.data) <= 0.25)

    def test_zeros_scheme(self):
        params = init_params(0, 'zeros')
        assert not params.weight('w', (2, 3), fan_in=3).data.any()
        assert params.gain('g', 3).data.tolist() == [1.0, 1.0, 1.0]

    def test_unknown_scheme(self):
        with pytest.raises(ConfigError):
            init_params(0, 'xavier')

    def test_duplicate_names(self):
        params = init_params(0)
        params.bias('b', 2)
        with pytest.raises(ConfigError):
            params.bias('b', 2)

    def test_assign_checks_names_and_shapes(self):
        params = init_params(0)
        params.bias('b', 2)
        with pytest.raises(ShapeError):
            params.assign({})
        with pytest.raises(ShapeError):
            params.assign({'b': np.zeros(3)})
        params.assign({'b': np.array([1.0, 2.0]), 'unrelated': np.zeros(1)})
        assert params['b'].data.tolist() == [1.0, 2.0]

    def test_count(self):
        params = init_params(0)
        Linear(params, 'l', 3, 4)
        assert params.count() == 16
        assert params.keys() == ['l.weight', 'l.bias']


class TestLinear:

    def test_batched_shape(self, rng):
        layer = Linear(init_params(0), 'l', 4, 5)
        assert layer(T.Tensor(rng.normal(size=(2, 3, 4)))).shape == (2, 3, 5)

    def test_bias_is_added_to_every_row(self):
        params = init_params(0, 'zeros')
        layer = Linear(params, 'l', 3, 2)
        params.assign({'l.weight': np.zeros((2, 3)), 'l.bias': np.array([1.0, 2.0])})
        out = layer(T.Tensor(np.ones((4, 3))))
        assert out.data.tolist() == [[1.0, 2.0]] * 4

    def test_width_mismatch(self):
        layer = Linear(init_params(0), 'l', 3, 2)
        with pytest.raises(ShapeError):
            layer(T.zeros((1, 4)))


class TestPositions:

    def test_table_starts_with_sin_zero_cos_zero(self):
        table = sinusoidal_table(5, 6)
        assert table[0].tolist() == [0.0, 1.0, 0.0, 1.0, 0.0, 1.0]
        assert table.shape == (5, 6)

    def test_too_long(self):
        with pytest.raises(ShapeError):
            PositionalEncoding(3, 4).add_to(T.zeros((4, 4)))


class TestAttention:

    def test_heads_must_divide_the_width(self):
        with pytest.raises(ConfigError):
            AttentionConfig(10, 3)

    def test_cross_attention_shapes_and_weights(self, rng):
        attention = MultiHeadAttention(init_params(0), 'mha', AttentionConfig(8, 2))
        queries = T.Tensor(rng.normal(size=(3, 8)))
        keys = T.Tensor(rng.normal(size=(5, 8)))
        out, weights = attention(queries, keys, return_weights=True)
        assert out.shape == (3, 8)
        assert len(weights) == 2
        for w in weights:
            assert w.shape == (3, 5)
            np.testing.assert_allclose(w.data.sum(axis=-1), np.ones(3))

    def test_batched(self, rng):
        attention = MultiHeadAttention(init_params(0), 'mha', AttentionConfig(8, 4))
        x = T.Tensor(rng.normal(size=(2, 6, 8)))
        assert attention(x, x).shape == (2, 6, 8)

    def test_zero_weight_blocks_are_identities(self, rng):
        cfg = AttentionConfig(8, 2)
        params = init_params(0, 'zeros')
        encoder = EncoderBlock(params, 'enc', cfg)
        decoder = DecoderBlock(params, 'dec', cfg)
        x = T.Tensor(rng.normal(size=(4, 8)))
        memory = T.Tensor(rng.normal(size=(6, 8)))
        np.testing.assert_array_equal(encoder(x).data, x.data)
        np.testing.assert_array_equal(decoder(x, memory).data, x.data)

    def test_key_order_does_not_matter(self, rng):
        attention = MultiHeadAttention(init_params(2), 'mha', AttentionConfig(8, 2))
        queries = T.Tensor(rng.normal(size=(3, 8)))
        keys = rng.normal(size=(6, 8))
        shuffled = keys[rng.permutation(6)]
        np.testing.assert_allclose(attention(queries, T.Tensor(shuffled)).data,
                                   attention(queries, T.Tensor(keys)).data,
                                   rtol=0, atol=1e-12)

    def test_repeated_memory_tokens_do_not_matter(self, rng):
        decoder = DecoderBlock(init_params(3), 'dec', AttentionConfig(8, 2))
        queries = T.Tensor(rng.normal(size=(4, 8)))
        memory = rng.normal(size=(5, 8))
        doubled = np.repeat(memory, 2, axis=0)
        np.testing.assert_allclose(decoder(queries, T.Tensor(doubled)).data,
                                   decoder(queries, T.Tensor(memory)).data,
                                   rtol=0, atol=1e-9)

    def test_block_gradients(self, rng):
        cfg = AttentionConfig(4, 2)
        params = init_params(1)
        block = EncoderBlock(params, 'enc', cfg)
        x = T.Tensor(rng.normal(size=(3, 4)))
        weights = T.Tensor(rng.normal(size=(3, 4)))

        def loss():
            return T.reduce_sum(T.mul(block(x), weights))

        worst, _ = T.finite_diff_check_params(loss, params, n_samples=25, seed=3)
        assert worst < 1e-4
