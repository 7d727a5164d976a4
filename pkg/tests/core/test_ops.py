"""
Tests for tensors, reverse-mode differentiation and the differentiable operations
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bimodal_captioner.core import ops
from bimodal_captioner.core.tensor import Tensor, backward, no_grad
from bimodal_captioner.errors import ConfigurationError, ContractError, DegenerateMaskError, DimensionError


def tracked(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


class TestBackward:
    """Gradient accumulation and the scalar-loss contract."""

    def test_requires_scalar_loss(self, rng):
        x = tracked(rng, 2, 2)
        with pytest.raises(ContractError):
            backward(ops.scale(x, 2.0))

    def test_untracked_loss_is_rejected(self):
        with pytest.raises(ContractError):
            backward(ops.sum(Tensor(np.ones(3))))

    def test_gradients_accumulate(self, rng):
        x = tracked(rng, 3)
        backward(ops.sum(ops.scale(x, 2.0)))
        backward(ops.sum(ops.scale(x, 2.0)))
        np.testing.assert_allclose(x.grad, np.full(3, 4.0))

    def test_shared_input_sums_both_paths(self, rng):
        x = tracked(rng, 4)
        backward(ops.sum(ops.mul(x, x)))
        np.testing.assert_allclose(x.grad, 2 * x.data)

    def test_no_grad_records_nothing(self, rng):
        x = tracked(rng, 2, 2)
        with no_grad():
            y = ops.matmul(x, x)
        assert not y.requires_grad
        assert y.parents == ()

    def test_detached_branch_gets_no_gradient(self, rng):
        x = tracked(rng, 3)
        backward(ops.sum(ops.mul(x, x.detach())))
        np.testing.assert_allclose(x.grad, x.data)


class TestElementwiseGradients:
    @pytest.mark.parametrize("name", ["relu", "sigmoid", "exp"])
    def test_unary(self, rng, assert_gradients, name):
        x = tracked(rng, 3, 4)
        assert_gradients(lambda: ops.sum(ops.elementwise(name, x)), [x])

    def test_log_and_softplus(self, rng, assert_gradients):
        x = Tensor(rng.uniform(0.5, 2.0, size=(3, 3)), requires_grad=True)
        assert_gradients(lambda: ops.sum(ops.add(ops.log(x), ops.softplus(x))), [x])

    def test_scalar_operand_receives_summed_gradient(self, rng):
        x = tracked(rng, 2, 3)
        s = Tensor(1.5, requires_grad=True)
        backward(ops.sum(ops.mul(x, s)))
        assert s.grad == pytest.approx(x.data.sum())

    def test_mismatched_shapes_raise(self, rng):
        with pytest.raises(DimensionError):
            ops.add(tracked(rng, 2, 3), tracked(rng, 3, 2))

    def test_unknown_elementwise_name(self, rng):
        with pytest.raises(ConfigurationError):
            ops.elementwise("tanh", tracked(rng, 2))


class TestMatrixGradients:
    def test_matmul(self, rng, assert_gradients):
        a, b = tracked(rng, 3, 4), tracked(rng, 4, 2)
        assert_gradients(lambda: ops.sum(ops.mul(ops.matmul(a, b), ops.matmul(a, b))), [a, b])

    def test_matmul_shape_check(self, rng):
        with pytest.raises(DimensionError):
            ops.matmul(tracked(rng, 3, 4), tracked(rng, 3, 4))

    def test_linear(self, rng, assert_gradients):
        x, w, b = tracked(rng, 5, 3), tracked(rng, 3, 2), tracked(rng, 2)
        assert_gradients(lambda: ops.sum(ops.sigmoid(ops.linear(x, w, b))), [x, w, b])

    def test_concat_and_getitem(self, rng, assert_gradients):
        a, b = tracked(rng, 3, 2), tracked(rng, 3, 4)

        def fn():
            joined = ops.concat([a, b], axis=-1)
            return ops.sum(ops.mul(ops.getitem(joined, (slice(None), slice(1, 5))), joined[:, 0:4]))

        assert_gradients(fn, [a, b])

    def test_take_rows_scatters_repeated_ids(self, rng):
        table = tracked(rng, 5, 3)
        backward(ops.sum(ops.take_rows(table, [1, 1, 4])))
        expected = np.zeros((5, 3))
        expected[1] = 2.0
        expected[4] = 1.0
        np.testing.assert_allclose(table.grad, expected)


class TestSoftmaxRows:
    """Masked row-wise softmax."""

    @given(st.integers(1, 5), st.integers(1, 6), st.integers(0, 2 ** 16))
    @settings(max_examples=30, deadline=None)
    def test_rows_are_distributions(self, rows, cols, seed):
        local = np.random.default_rng(seed)
        x = Tensor(local.normal(scale=10.0, size=(rows, cols)))
        mask = local.random((rows, cols)) < 0.6
        mask[np.arange(rows), local.integers(cols, size=rows)] = True
        out = ops.softmax_rows(x, mask).data
        np.testing.assert_allclose(out.sum(axis=1), 1.0)
        assert (out[~mask] == 0.0).all()
        assert (out >= 0).all()

    def test_large_logits_are_stable(self):
        out = ops.softmax_rows(Tensor([[1000.0, 1000.0, -1000.0]])).data
        np.testing.assert_allclose(out, [[0.5, 0.5, 0.0]], atol=1e-12)

    def test_empty_mask_row_raises(self):
        with pytest.raises(DegenerateMaskError):
            ops.softmax_rows(Tensor(np.zeros((2, 3))), np.array([[True, False, False], [False, False, False]]))

    def test_gradient_with_mask(self, rng, assert_gradients):
        x = tracked(rng, 3, 4)
        weights = Tensor(rng.normal(size=(3, 4)))
        mask = np.tril(np.ones((3, 4), dtype=bool))
        assert_gradients(lambda: ops.sum(ops.mul(ops.softmax_rows(x, mask), weights)), [x])


class TestLayerNorm:
    def test_normalizes_last_dimension(self, rng):
        x = Tensor(rng.normal(loc=3.0, scale=5.0, size=(4, 8)))
        out = ops.layer_norm(x, Tensor(np.ones(8)), Tensor(np.zeros(8))).data
        np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.std(axis=-1), 1.0, atol=1e-4)

    def test_gradient(self, rng, assert_gradients):
        x, gain, bias = tracked(rng, 3, 5), tracked(rng, 5), tracked(rng, 5)
        weights = Tensor(rng.normal(size=(3, 5)))
        assert_gradients(lambda: ops.sum(ops.mul(ops.layer_norm(x, gain, bias), weights)), [x, gain, bias])

    def test_gain_shape_is_checked(self, rng):
        with pytest.raises(DimensionError):
            ops.layer_norm(tracked(rng, 2, 4), tracked(rng, 3), tracked(rng, 4))


class TestConv1d:
    def test_identity_kernel_preserves_input(self, rng):
        x = Tensor(rng.normal(size=(7, 3)))
        kernels = np.zeros((3, 3, 3))
        kernels[1] = np.eye(3)
        out = ops.conv1d(x, Tensor(kernels), 3)
        np.testing.assert_allclose(out.data, x.data)

    def test_zero_padding_at_edges(self):
        x = Tensor(np.ones((4, 1)))
        out = ops.conv1d(x, Tensor(np.ones((3, 1, 1))), 3)
        np.testing.assert_allclose(out.data[:, 0], [2.0, 3.0, 3.0, 2.0])

    def test_even_kernel_rejected(self, rng):
        with pytest.raises(ConfigurationError):
            ops.conv1d(tracked(rng, 5, 2), tracked(rng, 2, 2, 2), 2)

    def test_gradient(self, rng, assert_gradients):
        x, kernels, bias = tracked(rng, 6, 2), tracked(rng, 5, 2, 3), tracked(rng, 3)
        assert_gradients(lambda: ops.sum(ops.relu(ops.conv1d(x, kernels, 5, bias))), [x, kernels, bias])


class TestDropout:
    def test_identity_outside_training(self, rng):
        x = tracked(rng, 4, 4)
        assert ops.dropout(x, 0.5, rng, training=False) is x

    def test_inverted_scaling(self):
        x = Tensor(np.ones((200, 50)))
        out = ops.dropout(x, 0.25, np.random.default_rng(0), training=True).data
        kept = out[out > 0]
        np.testing.assert_allclose(kept, 1.0 / 0.75)
        assert abs((out == 0).mean() - 0.25) < 0.02

    def test_same_seed_same_mask(self):
        x = Tensor(np.ones((10, 10)))
        first = ops.dropout(x, 0.5, np.random.default_rng(7), training=True).data
        second = ops.dropout(x, 0.5, np.random.default_rng(7), training=True).data
        np.testing.assert_array_equal(first, second)

    def test_training_requires_generator(self, rng):
        with pytest.raises(ConfigurationError):
            ops.dropout(tracked(rng, 2), 0.1, None, training=True)
