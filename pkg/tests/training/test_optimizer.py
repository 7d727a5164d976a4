"""
Tests for the Adam optimizer
"""

import numpy as np
import pytest

from bimodal_captioner.core import ops
from bimodal_captioner.core.tensor import Parameter, backward
from bimodal_captioner.errors import ConfigurationError
from bimodal_captioner.training.optimizer import Adam, AdamState, adam_step


class TestAdamStep:
    def test_first_step_moves_by_learning_rate(self):
        param = Parameter(np.array([1.0, -2.0]))
        adam_step([param], [np.array([0.5, -3.0])], lr=0.1, state=AdamState())
        # Bias correction makes the first update lr * sign(grad)
        np.testing.assert_allclose(param.data, [0.9, -1.9], atol=1e-6)

    def test_zero_gradient_leaves_parameter(self):
        param = Parameter(np.array([3.0]))
        adam_step([param], [np.zeros(1)], lr=0.1, state=AdamState())
        np.testing.assert_array_equal(param.data, [3.0])

    def test_missing_gradient_is_skipped(self):
        param = Parameter(np.array([3.0]))
        state = AdamState()
        adam_step([param], [None], lr=0.1, state=state)
        assert state.step == 1
        assert state.first == {}


class TestAdam:
    def test_minimizes_a_quadratic(self):
        x = Parameter(np.array([2.0, -1.5]))
        optimizer = Adam([x], lr=0.05)
        for _ in range(400):
            optimizer.zero_grad()
            backward(ops.sum(ops.mul(x, x)))
            optimizer.step()
        np.testing.assert_allclose(x.data, 0.0, atol=0.1)

    def test_frozen_parameters_are_excluded(self):
        trainable = Parameter(np.ones(2))
        frozen = Parameter(np.ones(2), requires_grad=False)
        optimizer = Adam([trainable, frozen], lr=0.1)
        assert optimizer.params == [trainable]

    def test_learning_rate_must_be_positive(self):
        with pytest.raises(ConfigurationError):
            Adam([Parameter(np.ones(1))], lr=0.0)

    def test_zero_grad_clears_gradients(self):
        x = Parameter(np.ones(3))
        optimizer = Adam([x], lr=0.1)
        backward(ops.sum(x))
        assert x.grad is not None
        optimizer.zero_grad()
        assert x.grad is None
