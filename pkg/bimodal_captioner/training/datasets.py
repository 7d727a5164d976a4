"""
Datasets - Feature loading and assembly of caption and proposal training items
"""

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from bimodal_captioner.data.annotations import AnnotationSet
from bimodal_captioner.data.batching import CaptionItem, ProposalItem
from bimodal_captioner.data.features import FeatureSequence, feature_paths, load_features
from bimodal_captioner.data.vocabulary import Vocabulary
from bimodal_captioner.errors import DataError
from bimodal_captioner.model.proposal_generator import clip_features
from bimodal_captioner.utils.logger import get_logger

logger = get_logger(__name__)

VideoFeatures = Dict[str, Tuple[FeatureSequence, FeatureSequence]]


def load_video_features(features_dir: Union[str, Path], video_ids: Sequence[str],
                        d_a: Optional[int] = None, d_v: Optional[int] = None, workers: int = 0) -> VideoFeatures:
    """
    Load the audio and visual features of several videos.

    Args:
        features_dir: Directory with ``audio/`` and ``visual/`` feature files
        video_ids: Videos to load
        d_a: Expected audio width
        d_v: Expected visual width
        workers: Loader threads; 0 loads sequentially

    Returns:
        Mapping of video id to (audio, visual), in the order of ``video_ids``
    """
    def load_one(video_id: str) -> Tuple[FeatureSequence, FeatureSequence]:
        audio_path, visual_path = feature_paths(features_dir, video_id)
        return load_features(audio_path, d_a), load_features(visual_path, d_v)

    if workers > 0:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            loaded = list(pool.map(load_one, video_ids))
    else:
        loaded = [load_one(video_id) for video_id in video_ids]
    return dict(zip(video_ids, loaded))


def _available(annotations: AnnotationSet, features: VideoFeatures) -> List:
    videos = [video for video in annotations if video.video_id in features]
    missing = len(annotations) - len(videos)
    if missing:
        logger.warning("Skipping %d annotated videos without features", missing)
    return videos


def build_caption_items(annotations: AnnotationSet, features: VideoFeatures, vocab: Vocabulary) -> List[CaptionItem]:
    """
    One item per ground-truth segment: features clipped to the segment and its framed caption ids.

    Args:
        annotations: Ground truth
        features: Whole-video features per video id
        vocab: Caption vocabulary

    Returns:
        Caption items in annotation order
    """
    items = []
    for video in _available(annotations, features):
        audio, visual = features[video.video_id]
        for segment in video.segments:
            if segment.end <= segment.start:
                logger.warning("Skipping empty segment [%.2f, %.2f] of %s", segment.start, segment.end, video.video_id)
                continue
            clipped_audio, clipped_visual = clip_features(audio, visual, segment)
            items.append(CaptionItem(video.video_id, clipped_audio, clipped_visual,
                                     vocab.encode(segment.sentence), segment))
    if not items:
        raise DataError("no captioned segments with features to train on")
    return items


def build_proposal_items(annotations: AnnotationSet, features: VideoFeatures) -> List[ProposalItem]:
    """One item per video holding its whole features and every ground-truth segment."""
    items = [
        ProposalItem(video.video_id, *features[video.video_id], list(video.segments), video.duration)
        for video in _available(annotations, features)
    ]
    if not items:
        raise DataError("no annotated videos with features to train on")
    return items
