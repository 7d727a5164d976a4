"""
Batching - Right-padding of feature and caption sequences with boolean masks
"""

from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np

from bimodal_captioner.data.annotations import EventSegment
from bimodal_captioner.data.features import FeatureSequence
from bimodal_captioner.errors import DataError


@dataclass
class CaptionItem:
    """Features clipped to one ground-truth segment, with the caption token ids."""

    video_id: str
    audio: FeatureSequence
    visual: FeatureSequence
    caption_ids: List[int]
    segment: Optional[EventSegment] = None


@dataclass
class ProposalItem:
    """Whole-video features with every ground-truth segment of the video."""

    video_id: str
    audio: FeatureSequence
    visual: FeatureSequence
    segments: List[EventSegment]
    duration: float = 0.0


@dataclass
class PaddedSequence:
    """A T_pad×d matrix whose first ``length`` rows are real."""

    values: np.ndarray
    mask: np.ndarray
    cell_seconds: float

    @property
    def length(self) -> int:
        return int(self.mask.sum())


@dataclass
class Batch:
    video_ids: List[str]
    audio: List[PaddedSequence]
    visual: List[PaddedSequence]
    captions: Optional[np.ndarray] = None
    caption_masks: Optional[np.ndarray] = None
    segments: List[List[EventSegment]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.video_ids)


def pad_sequence(features: FeatureSequence, length: int, video_id: str = "") -> PaddedSequence:
    """
    Right-pad a feature sequence with zero rows.

    Args:
        features: Sequence to pad
        length: Target number of rows
        video_id: Named in the error for over-length items

    Returns:
        The padded sequence and its mask
    """
    if features.length > length:
        raise DataError(
            f"video '{video_id}': {features.modality} sequence of length {features.length} exceeds pad length {length}"
        )
    values = np.zeros((length, features.dim))
    values[:features.length] = features.matrix
    mask = np.zeros(length, dtype=bool)
    mask[:features.length] = True
    return PaddedSequence(values, mask, features.cell_seconds)


def make_batch(items: Sequence, pad_to: Optional[Dict[str, int]] = None, pad_id: int = 1) -> Batch:
    """
    Pad a list of caption or proposal items into a batch.

    Args:
        items: CaptionItem or ProposalItem instances
        pad_to: Per-modality pad lengths (``audio``/``visual``); the longest item is used when absent
        pad_id: Token id used to pad captions

    Returns:
        The batch
    """
    if not items:
        raise DataError("cannot batch an empty list of items")
    pad_to = pad_to or {}
    audio_len = pad_to.get("audio") or max(item.audio.length for item in items)
    visual_len = pad_to.get("visual") or max(item.visual.length for item in items)

    batch = Batch(
        video_ids=[item.video_id for item in items],
        audio=[pad_sequence(item.audio, audio_len, item.video_id) for item in items],
        visual=[pad_sequence(item.visual, visual_len, item.video_id) for item in items],
    )

    if isinstance(items[0], CaptionItem):
        caption_len = max(len(item.caption_ids) for item in items)
        captions = np.full((len(items), caption_len), pad_id, dtype=np.int64)
        masks = np.zeros((len(items), caption_len), dtype=bool)
        for row, item in enumerate(items):
            captions[row, :len(item.caption_ids)] = item.caption_ids
            masks[row, :len(item.caption_ids)] = True
        batch.captions, batch.caption_masks = captions, masks
    else:
        batch.segments = [list(item.segments) for item in items]
    return batch


def iterate_batches(items: Sequence, batch_size: int, rng: Optional[np.random.Generator] = None) -> Iterator[List]:
    """
    Yield item lists of at most ``batch_size``, shuffled by ``rng`` when given.

    Args:
        items: Dataset items
        batch_size: Maximum items per batch
        rng: Seeded generator; the order is fixed when omitted

    Yields:
        Lists of items
    """
    order = np.arange(len(items))
    if rng is not None:
        order = rng.permutation(len(items))
    for start in range(0, len(order), batch_size):
        yield [items[i] for i in order[start:start + batch_size]]
