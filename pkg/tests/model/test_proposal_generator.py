"""
Tests for proposal heads, proposal decoding, the common pool and feature clipping
"""

import math

import numpy as np
import pytest

from bimodal_captioner.core.tensor import Tensor
from bimodal_captioner.data.annotations import EventSegment
from bimodal_captioner.data.batching import pad_sequence
from bimodal_captioner.data.features import FeatureSequence
from bimodal_captioner.errors import ConfigurationError, ContractError, DataError
from bimodal_captioner.model.encoder import EncoderConfig, encode
from bimodal_captioner.model.proposal_generator import (
    AnchorSet, MultiHeadedProposalGenerator, ProposalHead, ProposalHeadConfig, clip_features, decode_proposal,
    generate_proposals, pool_size, proposal_head_forward,
)


@pytest.fixture
def generator(rng):
    anchors = {
        "audio": AnchorSet("audio", (2.0, 6.0), 0.96),
        "visual": AnchorSet("visual", (1.0, 3.0, 5.0), 2.56),
    }
    return MultiHeadedProposalGenerator(EncoderConfig(1, 8, 12, 2, 8, dropout=0.0), anchors,
                                        {"audio": [1, 3], "visual": [3]}, rng, hidden=6, dropout=0.0)


class TestAnchorSet:
    def test_sorted_and_positive(self):
        with pytest.raises(ConfigurationError):
            AnchorSet("audio", (3.0, 2.0), 0.96)
        with pytest.raises(ConfigurationError):
            AnchorSet("audio", (0.0,), 0.96)

    def test_seconds(self):
        assert AnchorSet("visual", (1.0, 2.5), 2.0).seconds == [2.0, 5.0]

    def test_json_round_trip(self):
        anchors = AnchorSet("visual", (1.5, 4.0), 2.56)
        assert AnchorSet.from_json(anchors.to_json()) == anchors


class TestProposalHead:
    def test_even_kernel_rejected(self):
        with pytest.raises(ConfigurationError):
            ProposalHeadConfig(kernel_size=4, d=8, anchors=2)

    def test_output_shape(self, rng):
        head = ProposalHead(ProposalHeadConfig(5, d=8, anchors=3, hidden=6, dropout=0.0), rng)
        assert head(Tensor(rng.normal(size=(11, 8)))).shape == (11, 3, 3)

    def test_functional_form_matches_the_module(self, rng):
        head = ProposalHead(ProposalHeadConfig(3, d=8, anchors=2, hidden=6, dropout=0.0), rng)
        x = Tensor(rng.normal(size=(7, 8)))
        np.testing.assert_array_equal(proposal_head_forward(x, head).data, head(x).data)


class TestDecodeProposal:
    def test_zero_logits(self):
        proposal = decode_proposal([0.0, 0.0, 0.0], p=3, anchor=2.0, cell_seconds=0.5)
        assert proposal.center == pytest.approx(1.75)
        assert proposal.length == pytest.approx(1.0)
        assert proposal.confidence == pytest.approx(0.5)
        assert (proposal.start, proposal.end) == pytest.approx((1.25, 2.25))

    def test_length_uses_exponent(self):
        proposal = decode_proposal([0.0, math.log(3.0), 10.0], p=0, anchor=2.0, cell_seconds=1.0)
        assert proposal.length == pytest.approx(6.0)
        assert proposal.confidence > 0.99

    def test_start_is_clamped_at_zero(self):
        assert decode_proposal([-5.0, 3.0, 0.0], p=0, anchor=4.0, cell_seconds=1.0).start == 0.0

    def test_anchor_must_be_positive(self):
        with pytest.raises(ContractError):
            decode_proposal([0.0, 0.0, 0.0], 0, 0.0, 1.0)


class TestPool:
    def test_pool_size_at_full_scale(self):
        assert pool_size(800, 10, 48, 300, 10, 128) == 768000

    def test_top_k_sorted_by_confidence(self, generator, rng):
        enc = generator.encoder(rng.normal(size=(10, 8)), rng.normal(size=(4, 12)))
        proposals = generate_proposals(enc, generator, top_k=7)
        assert len(proposals) == 7
        confidences = [p.confidence for p in proposals]
        assert confidences == sorted(confidences, reverse=True)

    def test_pool_holds_every_prediction(self, generator, rng):
        enc = generator.encoder(rng.normal(size=(10, 8)), rng.normal(size=(4, 12)))
        expected = pool_size(10, 2, 2, 4, 1, 3)
        assert len(generate_proposals(enc, generator, top_k=10 ** 6)) == expected

    def test_padded_positions_never_propose(self, generator, rng):
        audio = pad_sequence(FeatureSequence("audio", rng.normal(size=(6, 8)), 0.96), 10)
        visual = pad_sequence(FeatureSequence("visual", rng.normal(size=(2, 12)), 2.56), 4)
        enc = encode(audio, visual, generator.encoder)
        proposals = generate_proposals(enc, generator, top_k=10 ** 6)
        assert len(proposals) == pool_size(6, 2, 2, 2, 1, 3)
        assert all(p.position < (6 if p.modality == "audio" else 2) for p in proposals)

    def test_top_k_must_be_positive(self, generator, rng):
        enc = generator.encoder(rng.normal(size=(4, 8)), rng.normal(size=(2, 12)))
        with pytest.raises(ConfigurationError):
            generate_proposals(enc, generator, top_k=0)

    def test_missing_anchor_set(self, rng):
        with pytest.raises(ConfigurationError):
            MultiHeadedProposalGenerator(EncoderConfig(1, 8, 12, 2, 8), {"audio": AnchorSet("audio", (1.0,), 0.96)},
                                         {"audio": [1]}, rng)

    def test_frozen_encoder_pass_records_nothing(self, generator, rng):
        enc, outputs = generator(rng.normal(size=(5, 8)), rng.normal(size=(2, 12)), encoder_grad=False)
        assert not enc.A_v.requires_grad
        assert outputs["audio"][0].requires_grad


class TestClipFeatures:
    def test_rows_overlapping_the_segment(self):
        audio = FeatureSequence("audio", np.arange(10.0)[:, None], 0.96)
        visual = FeatureSequence("visual", np.arange(4.0)[:, None], 2.56)
        clipped_audio, clipped_visual = clip_features(audio, visual, EventSegment(1.0, 3.0))
        np.testing.assert_array_equal(clipped_audio.matrix[:, 0], [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(clipped_visual.matrix[:, 0], [0.0, 1.0])

    def test_tiny_segment_keeps_one_row(self):
        visual = FeatureSequence("visual", np.arange(4.0)[:, None], 2.56)
        _, clipped = clip_features(None, visual, EventSegment(2.56, 2.56 + 1e-12))
        assert clipped.length == 1

    def test_segment_outside_features(self):
        audio = FeatureSequence("audio", np.zeros((5, 2)), 0.96)
        with pytest.raises(DataError):
            clip_features(audio, None, EventSegment(10.0, 12.0))

    def test_empty_segment(self):
        audio = FeatureSequence("audio", np.zeros((5, 2)), 0.96)
        with pytest.raises(ContractError):
            clip_features(audio, None, EventSegment(2.0, 2.0))
