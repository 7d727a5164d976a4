"""
Pipeline - Inference over whole videos: proposing segments and captioning them
"""

from collections import OrderedDict
from contextlib import contextmanager
from typing import Dict, Iterator, List, Mapping, Sequence, Tuple

import numpy as np

from bimodal_captioner.core.module import Module
from bimodal_captioner.core.tensor import no_grad
from bimodal_captioner.data.annotations import EventSegment, PredictedSegment
from bimodal_captioner.data.features import FeatureSequence
from bimodal_captioner.data.vocabulary import Vocabulary
from bimodal_captioner.errors import DataError
from bimodal_captioner.model.captioner import BiModalTransformer, greedy_caption
from bimodal_captioner.model.encoder import encode
from bimodal_captioner.model.proposal_generator import (
    MultiHeadedProposalGenerator, clip_features, generate_proposals,
)
from bimodal_captioner.utils.logger import get_logger

logger = get_logger(__name__)

VideoFeatures = Mapping[str, Tuple[FeatureSequence, FeatureSequence]]


@contextmanager
def inference(model: Module) -> Iterator[Module]:
    """Evaluation mode without gradient recording; the previous mode is restored on exit."""
    was_training = model.training
    model.eval()
    try:
        with no_grad():
            yield model
    finally:
        model.train(was_training)


def encoder_state(params: Mapping[str, np.ndarray], prefix: str = "encoder") -> "OrderedDict[str, np.ndarray]":
    """Extract the encoder parameters of a full model state, without their prefix."""
    state = OrderedDict(
        (path[len(prefix) + 1:], value) for path, value in params.items() if path.startswith(prefix + ".")
    )
    if not state:
        raise DataError(f"checkpoint holds no '{prefix}' parameters")
    return state


def features_extent(audio: FeatureSequence, visual: FeatureSequence) -> float:
    return max(audio.duration, visual.duration)


def propose_segments(generator: MultiHeadedProposalGenerator, audio: FeatureSequence, visual: FeatureSequence,
                     top_k: int = 100) -> List[PredictedSegment]:
    """
    Top-k proposals of one video as segments in seconds.

    Starts are clipped at 0 by the decoder; ends may run past the video.

    Args:
        generator: Trained proposal generator
        audio: Whole-video audio features
        visual: Whole-video visual features
        top_k: Number of proposals

    Returns:
        Segments in descending confidence order
    """
    with inference(generator):
        enc = encode(audio, visual, generator.encoder)
        proposals = generate_proposals(enc, generator, top_k)
    return [PredictedSegment(proposal.start, proposal.end, proposal.confidence) for proposal in proposals]


def caption_segment(model: BiModalTransformer, vocab: Vocabulary, audio: FeatureSequence,
                    visual: FeatureSequence, start: float, end: float, max_len: int = 30) -> Tuple[str, bool]:
    """
    Caption one interval of a video.

    Returns:
        (caption text, truncated flag)
    """
    clipped_audio, clipped_visual = clip_features(audio, visual, EventSegment(start, end, ""))
    with inference(model):
        enc = encode(clipped_audio, clipped_visual, model.encoder)
        result = greedy_caption(model, enc, vocab.start_id, vocab.end_id, max_len,
                                banned_ids=(vocab.unk_id, vocab.pad_id, vocab.start_id))
    return vocab.decode(result.token_ids), result.truncated


def propose_videos(generator: MultiHeadedProposalGenerator, features: VideoFeatures,
                   top_k: int = 100) -> "OrderedDict[str, List[PredictedSegment]]":
    """Proposals for every video, keyed by video id in sorted order."""
    results = OrderedDict()
    for video_id in sorted(features):
        audio, visual = features[video_id]
        results[video_id] = propose_segments(generator, audio, visual, top_k)
        logger.debug("%s: %d proposals", video_id, len(results[video_id]))
    return results


def caption_videos(model: BiModalTransformer, vocab: Vocabulary, features: VideoFeatures,
                   segments: Mapping[str, Sequence], max_len: int = 30) -> "OrderedDict[str, List[PredictedSegment]]":
    """
    Caption given segments of every video.

    Args:
        model: Trained captioning model
        vocab: Training vocabulary
        features: Whole-video features per video id
        segments: Segments per video id (ground truth or predictions); confidences are kept
        max_len: Maximum caption length

    Returns:
        Captioned segments per video id in sorted order
    """
    results = OrderedDict()
    truncated = 0
    for video_id in sorted(segments):
        if video_id not in features:
            logger.warning("No features for video %s; skipping its %d segments", video_id, len(segments[video_id]))
            continue
        audio, visual = features[video_id]
        extent = features_extent(audio, visual)
        captioned = []
        for segment in segments[video_id]:
            if segment.end <= segment.start or segment.start >= extent:
                logger.warning("Skipping segment [%.2f, %.2f] of %s outside its %.2fs of features",
                               segment.start, segment.end, video_id, extent)
                continue
            text, cut = caption_segment(model, vocab, audio, visual, segment.start, segment.end, max_len)
            truncated += int(cut)
            captioned.append(PredictedSegment(segment.start, segment.end,
                                              getattr(segment, "confidence", 1.0), text))
        results[video_id] = captioned
    if truncated:
        logger.info("%d captions reached the maximum length of %d tokens", truncated, max_len)
    return results


def segments_from_ground_truth(annotations) -> Dict[str, List[EventSegment]]:
    """Ground-truth segments per video, for captioning in the ground-truth-proposal setting."""
    segments = {video.video_id: list(video.segments) for video in annotations}
    if not any(segments.values()):
        raise DataError("ground truth holds no segments to caption")
    return segments
