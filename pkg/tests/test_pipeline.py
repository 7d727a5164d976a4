"""
Tests for whole-video inference: proposing and captioning segments
"""

from collections import OrderedDict

import numpy as np
import pytest

from bimodal_captioner.data.annotations import AnnotationSet, EventSegment, PredictedSegment
from bimodal_captioner.errors import DataError
from bimodal_captioner.model.encoder import encode
from bimodal_captioner.model.proposal_generator import generate_proposals
from bimodal_captioner.pipeline import (
    caption_videos, encoder_state, inference, propose_segments, propose_videos, segments_from_ground_truth,
)
from bimodal_captioner.workflow import build_captioner, build_proposal_generator, estimate_layout


@pytest.fixture
def generator(toy_config, synth):
    anchor_sets, kernel_sizes = estimate_layout(toy_config, synth.annotations)
    return build_proposal_generator(toy_config, anchor_sets, kernel_sizes)


@pytest.fixture
def captioner(toy_config, synth_vocab):
    return build_captioner(toy_config, synth_vocab)


class TestEncoderState:
    def test_strips_prefix(self):
        params = OrderedDict([("encoder.layers.0.w", np.ones(2)), ("generator.proj.bias", np.zeros(3))])
        assert list(encoder_state(params)) == ["layers.0.w"]

    def test_no_encoder(self):
        with pytest.raises(DataError):
            encoder_state({"generator.proj.bias": np.zeros(3)})


def test_inference_restores_mode(captioner):
    captioner.train()
    with inference(captioner):
        assert not captioner.training
    assert captioner.training


class TestProposeSegments:
    def test_keeps_every_pooled_proposal(self, generator, synth):
        audio, visual = synth.features["synth_0000"]
        with inference(generator):
            pooled = generate_proposals(encode(audio, visual, generator.encoder), generator, 20)
        segments = propose_segments(generator, audio, visual, top_k=20)
        assert len(segments) == len(pooled) == 20
        assert [s.end for s in segments] == [p.end for p in pooled]
        assert all(0.0 <= s.start < s.end for s in segments)
        confidences = [s.confidence for s in segments]
        assert confidences == sorted(confidences, reverse=True)

    def test_every_video_is_proposed(self, generator, synth):
        proposals = propose_videos(generator, synth.features, top_k=3)
        assert list(proposals) == sorted(synth.features)
        assert all(len(segments) <= 3 for segments in proposals.values())


class TestCaptionVideos:
    def test_captions_keep_confidence(self, captioner, synth_vocab, synth):
        segments = {"synth_0000": [PredictedSegment(0.0, 10.0, 0.4)]}
        captions = caption_videos(captioner, synth_vocab, synth.features, segments, max_len=5)
        (captioned,) = captions["synth_0000"]
        assert captioned.confidence == 0.4
        assert isinstance(captioned.sentence, str)
        assert len(captioned.sentence.split()) <= 5

    def test_skips_unknown_videos_and_out_of_range_segments(self, captioner, synth_vocab, synth):
        segments = {
            "missing": [EventSegment(0.0, 1.0)],
            "synth_0001": [EventSegment(500.0, 510.0), EventSegment(7.68, 15.36)],
        }
        captions = caption_videos(captioner, synth_vocab, synth.features, segments, max_len=4)
        assert list(captions) == ["synth_0001"]
        assert len(captions["synth_0001"]) == 1
        assert captions["synth_0001"][0].confidence == 1.0

    def test_ground_truth_segments(self, synth):
        segments = segments_from_ground_truth(synth.annotations)
        assert set(segments) == set(synth.features)

    def test_ground_truth_without_segments(self):
        with pytest.raises(DataError):
            segments_from_ground_truth(AnnotationSet())
