"""
Tests for the label-smoothed caption loss and the proposal loss
"""

import math

import numpy as np
import pytest

from bimodal_captioner.core import ops
from bimodal_captioner.core.tensor import Tensor
from bimodal_captioner.data.annotations import EventSegment
from bimodal_captioner.errors import ConfigurationError, ContractError, DimensionError
from bimodal_captioner.model.proposal_generator import AnchorSet
from bimodal_captioner.training.losses import LossCoefficients, caption_loss, proposal_loss, smoothed_targets
from bimodal_captioner.training.targets import assign_targets

PAD = 1


class TestSmoothedTargets:
    def test_mass_distribution(self):
        targets = smoothed_targets([4], vocab_size=5, gamma=0.3, pad_id=PAD)
        np.testing.assert_allclose(targets[0], [0.1, 0.0, 0.1, 0.1, 0.7])

    def test_rows_sum_to_one(self):
        targets = smoothed_targets([0, 2, 4], vocab_size=7, gamma=0.5, pad_id=PAD)
        np.testing.assert_allclose(targets.sum(axis=1), 1.0)

    def test_gamma_range(self):
        with pytest.raises(ConfigurationError):
            smoothed_targets([2], 5, 1.0, PAD)


class TestCaptionLoss:
    """KL(smoothed target || prediction), averaged over real positions."""

    def test_uniform_prediction_hand_value(self):
        uniform = Tensor(np.full((1, 5), 0.2))
        loss = caption_loss(uniform, [4], gamma=0.3, pad_id=PAD)
        expected = 0.7 * math.log(0.7 / 0.2) + 3 * 0.1 * math.log(0.1 / 0.2)
        assert loss.item() == pytest.approx(expected)

    def test_perfect_prediction_without_smoothing_is_zero(self):
        dist = np.full((2, 5), 1e-12)
        dist[0, 3] = dist[1, 2] = 1.0 - 4e-12
        loss = caption_loss(Tensor(dist), [3, 2], gamma=0.0, pad_id=PAD)
        assert loss.item() == pytest.approx(0.0, abs=1e-9)

    def test_pad_positions_are_ignored(self, rng):
        dist = rng.dirichlet(np.ones(6), size=3)
        with_pad = caption_loss(Tensor(dist), [4, 5, PAD], gamma=0.2, pad_id=PAD)
        without = caption_loss(Tensor(dist[:2]), [4, 5], gamma=0.2, pad_id=PAD)
        assert with_pad.item() == pytest.approx(without.item())

    def test_all_pad_targets(self):
        with pytest.raises(ContractError):
            caption_loss(Tensor(np.full((2, 5), 0.2)), [PAD, PAD], gamma=0.1, pad_id=PAD)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            caption_loss(Tensor(np.full((2, 5), 0.2)), [2], gamma=0.1)

    def test_gradient_through_softmax(self, rng, assert_gradients):
        logits = Tensor(rng.normal(size=(3, 6)), requires_grad=True)
        assert_gradients(lambda: caption_loss(ops.softmax_rows(logits), [2, 5, 3], gamma=0.4, pad_id=PAD), [logits])


class TestProposalLoss:
    @pytest.fixture
    def assignment(self):
        anchors = AnchorSet("audio", (1.0, 4.0), 1.0)
        return assign_targets([EventSegment(2.0, 6.0)], anchors, T=6)

    def test_hand_value(self, assignment):
        # Zero logits: sigmoid(c)=0.5, l=0, o=0
        raw = Tensor(np.zeros((6, 2, 3)))
        breakdown = {}
        loss = proposal_loss({"audio": [raw]}, {"audio": assignment}, LossCoefficients(1.0, 1.0, 100.0), breakdown)
        # The segment sits at p=4, anchor 1 with center offset 0 and log ratio 0
        assert breakdown["loc"] == pytest.approx(0.25)
        assert breakdown["obj"] == pytest.approx(math.log(2.0))
        assert breakdown["noobj"] == pytest.approx(11 * math.log(2.0))
        assert loss.item() == pytest.approx(0.25 + math.log(2.0) + 100 * 11 * math.log(2.0))

    def test_heads_of_a_modality_add_up(self, assignment, rng):
        raw = Tensor(rng.normal(size=(6, 2, 3)))
        single = proposal_loss({"audio": [raw]}, {"audio": assignment}).item()
        double = proposal_loss({"audio": [raw, raw]}, {"audio": assignment}).item()
        assert double == pytest.approx(2 * single)

    def test_padded_rows_carry_no_loss(self, rng):
        anchors = AnchorSet("visual", (2.0,), 1.0)
        assignment = assign_targets([EventSegment(0.0, 2.0)], anchors, T=5, valid_length=3)
        raw = rng.normal(size=(5, 1, 3))
        base = proposal_loss({"visual": [Tensor(raw)]}, {"visual": assignment}).item()
        raw[3:] = 50.0
        assert proposal_loss({"visual": [Tensor(raw)]}, {"visual": assignment}).item() == pytest.approx(base)

    def test_gradient(self, assignment, rng, assert_gradients):
        raw = Tensor(rng.normal(size=(6, 2, 3)), requires_grad=True)
        assert_gradients(lambda: proposal_loss({"audio": [raw]}, {"audio": assignment}, LossCoefficients(1, 2, 3)),
                         [raw])

    def test_missing_assignment(self, rng):
        with pytest.raises(ContractError):
            proposal_loss({"visual": [Tensor(np.zeros((2, 1, 3)))]}, {})

    def test_negative_coefficient(self):
        with pytest.raises(ConfigurationError):
            LossCoefficients(noobj=-1.0)
