"""
Tests for scaled dot-product and multi-headed attention
"""

import numpy as np
import pytest

from bimodal_captioner.core import ops
from bimodal_captioner.core.attention import (
    AttentionMask, MultiHeadAttention, MultiHeadConfig, multi_head_attention, scaled_dot_product_attention,
)
from bimodal_captioner.core.tensor import Tensor
from bimodal_captioner.errors import ConfigurationError, ContractError, DimensionError


class TestMasks:
    def test_padding_mask_repeats_key_mask(self):
        mask = AttentionMask.padding(np.array([True, True, False]), query_len=2)
        assert mask.shape == (2, 3)
        assert not mask.matrix[:, 2].any()

    def test_causal_mask_is_lower_triangular(self):
        mask = AttentionMask.causal(4)
        np.testing.assert_array_equal(mask.matrix, np.tril(np.ones((4, 4), dtype=bool)))

    def test_combined_mask_hides_pad_keys(self):
        mask = AttentionMask.combined(np.array([True, True, False, False]))
        assert mask.matrix[3, :2].all()
        assert not mask.matrix[3, 2:].any()
        assert not mask.matrix[0, 1:].any()

    def test_non_causal_matrix_rejected(self):
        with pytest.raises(ContractError):
            AttentionMask("causal", np.ones((2, 2), dtype=bool))


class TestScaledDotProduct:
    def test_single_key_returns_its_value(self, rng):
        q = Tensor(rng.normal(size=(3, 4)))
        k = Tensor(rng.normal(size=(1, 4)))
        v = Tensor(rng.normal(size=(1, 2)))
        out = scaled_dot_product_attention(q, k, v)
        np.testing.assert_allclose(out.data, np.repeat(v.data, 3, axis=0))

    def test_masked_keys_do_not_influence_output(self, rng):
        q = Tensor(rng.normal(size=(2, 4)))
        k = rng.normal(size=(3, 4))
        v = rng.normal(size=(3, 5))
        mask = AttentionMask.padding(np.array([True, True, False]), 2)
        first = scaled_dot_product_attention(q, Tensor(k), Tensor(v), mask).data
        k[2] += 100.0
        v[2] -= 100.0
        second = scaled_dot_product_attention(q, Tensor(k), Tensor(v), mask).data
        np.testing.assert_allclose(first, second)

    def test_shape_mismatch(self, rng):
        with pytest.raises(DimensionError):
            scaled_dot_product_attention(Tensor(rng.normal(size=(2, 4))), Tensor(rng.normal(size=(3, 5))),
                                         Tensor(rng.normal(size=(3, 5))))


class TestMultiHeadAttention:
    """Cross-dimensional attention with D_q != D_k."""

    def test_config_requires_divisible_width(self):
        with pytest.raises(ConfigurationError):
            MultiHeadConfig(heads=3, d_q=8, d_k=4, d_in=8)

    def test_d_in_defaults_to_query_width(self):
        cfg = MultiHeadConfig(heads=2, d_q=8, d_k=6)
        assert cfg.d_in == 8
        assert cfg.head_width == 4

    def test_output_lives_in_query_space(self, rng):
        attention = MultiHeadAttention(MultiHeadConfig(heads=2, d_q=6, d_k=10, d_in=8), rng)
        q = Tensor(rng.normal(size=(4, 6)))
        kv = Tensor(rng.normal(size=(7, 10)))
        assert multi_head_attention(q, kv, kv, attention).shape == (4, 6)

    def test_parameter_names(self, rng):
        attention = MultiHeadAttention(MultiHeadConfig(heads=2, d_q=4, d_k=6), rng)
        names = [name for name, _ in attention.named_parameters()]
        assert "Wq.head0" in names and "Wv.head1" in names and "Wout" in names

    def test_rejects_wrong_key_width(self, rng):
        attention = MultiHeadAttention(MultiHeadConfig(heads=2, d_q=4, d_k=6), rng)
        with pytest.raises(DimensionError):
            attention(Tensor(rng.normal(size=(2, 4))), Tensor(rng.normal(size=(3, 4))),
                      Tensor(rng.normal(size=(3, 4))))

    def test_gradients(self, rng, assert_gradients):
        attention = MultiHeadAttention(MultiHeadConfig(heads=2, d_q=4, d_k=3, d_in=4), rng)
        q = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        kv = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
        mask = AttentionMask.padding(np.array([True, True, True, False, True]), 3)

        def fn():
            out = attention(q, kv, kv, mask)
            return ops.sum(ops.mul(out, out))

        assert_gradients(fn, [q, kv, attention.Wout, attention.w_k[1]])
