"""
Metrics - Temporal IoU, proposal precision/recall/F1 and BLEU for dense captioning

Averaging order: for each video, precision and recall are averaged over the
tIoU thresholds; the per-video values are then averaged over the videos of the
ground truth, and F1 is the harmonic mean of the averaged precision and recall.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from sacrebleu.metrics import BLEU

from bimodal_captioner.data.annotations import AnnotationSet, EventSegment, PredictedSegment
from bimodal_captioner.data.vocabulary import tokenize
from bimodal_captioner.errors import ConfigurationError, ContractError, DataError
from bimodal_captioner.utils.logger import get_logger

logger = get_logger(__name__)

DEFAULT_THRESHOLDS = (0.3, 0.5, 0.7, 0.9)
# Reference used for predicted captions that overlap no ground-truth segment
NO_MATCH_REFERENCE = "abc123!@#"

Interval = Tuple[float, float]
GroundTruth = Union[AnnotationSet, Mapping[str, Sequence[EventSegment]]]


def tiou(a: Interval, b: Interval) -> float:
    """
    Temporal intersection over union of two intervals.

    Args:
        a: (start, end)
        b: (start, end)

    Returns:
        |a ∩ b| / |a ∪ b|, or 0 when the union is empty
    """
    (a_start, a_end), (b_start, b_end) = a, b
    if a_end < a_start or b_end < b_start:
        raise ContractError(f"inverted interval in tIoU: {a} vs {b}")
    intersection = max(0.0, min(a_end, b_end) - max(a_start, b_start))
    union = max(a_end, b_end) - min(a_start, b_start)
    if union <= 0:
        return 0.0
    return intersection / union


def validate_thresholds(thresholds: Sequence[float]) -> Tuple[float, ...]:
    thresholds = tuple(float(t) for t in thresholds)
    if not thresholds or any(not 0.0 < t <= 1.0 for t in thresholds):
        raise ConfigurationError(f"tIoU thresholds must be a non-empty list in (0, 1], got {thresholds}")
    return thresholds


def match_greedy(preds: Sequence[PredictedSegment], gts: Sequence[EventSegment],
                 threshold: float) -> List[Tuple[int, int]]:
    """
    One-to-one matching in descending confidence order.

    Each prediction takes the unmatched ground-truth segment with the highest
    tIoU, provided it reaches ``threshold``; ties go to the earlier segment.

    Args:
        preds: Predictions
        gts: Ground-truth segments
        threshold: Minimum tIoU of a match

    Returns:
        (prediction index, ground-truth index) pairs in matching order
    """
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, i))
    taken = set()
    matches = []
    for i in order:
        best_j, best_score = None, threshold
        for j, gt in enumerate(gts):
            if j in taken:
                continue
            score = tiou((preds[i].start, preds[i].end), (gt.start, gt.end))
            if score >= best_score and (best_j is None or score > best_score):
                best_j, best_score = j, score
        if best_j is not None:
            taken.add(best_j)
            matches.append((i, best_j))
    return matches


def video_precision_recall(preds: Sequence[PredictedSegment], gts: Sequence[EventSegment], threshold: float,
                           best_prefix: bool = False) -> Tuple[float, float]:
    """
    Precision and recall of one video at one threshold.

    Args:
        preds: Predictions of the video
        gts: Ground-truth segments of the video
        threshold: tIoU threshold
        best_prefix: Report the best precision over confidence-ranked prefixes

    Returns:
        (precision, recall); precision is 0 for an empty prediction list
    """
    if not preds:
        return 0.0, 0.0
    matches = match_greedy(preds, gts, threshold)
    recall = len(matches) / len(gts) if gts else 0.0
    if not best_prefix:
        return len(matches) / len(preds), recall

    ranks = sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, i))
    position = {pred_index: rank for rank, pred_index in enumerate(ranks)}
    matched_ranks = sorted(position[i] for i, _ in matches)
    precision = max((n + 1) / (rank + 1) for n, rank in enumerate(matched_ranks)) if matched_ranks else 0.0
    return precision, recall


def f1_score(precision: float, recall: float) -> float:
    if precision + recall <= 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass
class EvalReport:
    """Aggregate and per-threshold proposal scores, with optional caption scores."""

    precision: float
    recall: float
    f1: float
    thresholds: Tuple[float, ...]
    per_threshold: Dict[float, Dict[str, float]]
    per_video: Dict[str, Dict[str, float]]
    bleu: Dict[str, float] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    def to_json(self) -> Dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "thresholds": list(self.thresholds),
            "per_threshold": {f"{t:g}": values for t, values in self.per_threshold.items()},
            "per_video": self.per_video,
            "bleu": self.bleu,
            "notes": self.notes,
        }


def _segments_by_video(gt: GroundTruth) -> Dict[str, List[EventSegment]]:
    if isinstance(gt, AnnotationSet):
        return {video.video_id: list(video.segments) for video in gt}
    return {video_id: list(segments) for video_id, segments in gt.items()}


def proposal_prf(pred: Mapping[str, Sequence[PredictedSegment]], gt: GroundTruth,
                 thresholds: Sequence[float] = DEFAULT_THRESHOLDS, best_prefix: bool = False,
                 top_k: Optional[int] = None) -> EvalReport:
    """
    Precision, recall and F1 of temporal proposals.

    Args:
        pred: Predictions per video id
        gt: Ground truth per video id (videos without predictions count as empty)
        thresholds: tIoU thresholds
        best_prefix: Use the best-prefix precision of the public evaluator
        top_k: Only the ``top_k`` most confident predictions of each video are scored

    Returns:
        The evaluation report
    """
    thresholds = validate_thresholds(thresholds)
    segments = _segments_by_video(gt)
    if not segments:
        raise DataError("ground truth holds no videos")
    extra = sorted(set(pred) - set(segments))
    if extra:
        logger.warning("Ignoring predictions for %d videos absent from the ground truth", len(extra))

    video_ids = sorted(segments)
    per_video: Dict[str, Dict[str, float]] = {}
    by_threshold: Dict[float, List[Tuple[float, float]]] = {t: [] for t in thresholds}
    for video_id in video_ids:
        preds = sorted(pred.get(video_id, []), key=lambda s: (-s.confidence, s.start, s.end))
        if top_k is not None:
            preds = preds[:top_k]
        scores = [video_precision_recall(preds, segments[video_id], t, best_prefix) for t in thresholds]
        for t, score in zip(thresholds, scores):
            by_threshold[t].append(score)
        per_video[video_id] = {
            "precision": math.fsum(p for p, _ in scores) / len(scores),
            "recall": math.fsum(r for _, r in scores) / len(scores),
        }

    precision = math.fsum(v["precision"] for v in per_video.values()) / len(per_video)
    recall = math.fsum(v["recall"] for v in per_video.values()) / len(per_video)
    per_threshold = {}
    for t, values in by_threshold.items():
        p = math.fsum(v[0] for v in values) / len(values)
        r = math.fsum(v[1] for v in values) / len(values)
        per_threshold[t] = {"precision": p, "recall": r, "f1": f1_score(p, r)}

    notes = [
        "averaged over thresholds per video, then over videos; F1 from the averaged precision and recall",
        "precision of a video without predictions is 0",
        "one-to-one greedy matching in descending confidence order",
    ]
    if best_prefix:
        notes.append("precision is the best over confidence-ranked prediction prefixes")
    return EvalReport(precision, recall, f1_score(precision, recall), thresholds, per_threshold, per_video,
                      notes=notes)


def _bleu_scorer(n: int) -> BLEU:
    if not 1 <= n <= 4:
        raise ConfigurationError(f"BLEU order must be between 1 and 4, got {n}")
    return BLEU(max_ngram_order=n, smooth_method="none", tokenize="none", effective_order=False)


def _reference_streams(references: Sequence[Sequence[str]]) -> List[List[str]]:
    # Every candidate needs the same number of references; repeating one changes no clipped count
    width = max(len(refs) for refs in references)
    padded = [list(refs) + [refs[0]] * (width - len(refs)) for refs in references]
    return [[refs[i] for refs in padded] for i in range(width)]


def _as_text(tokens: Union[str, Sequence[str]]) -> str:
    return " ".join(tokenize(tokens)) if isinstance(tokens, str) else " ".join(tokens)


def bleu_score(candidates: Sequence[Union[str, Sequence[str]]],
               references: Sequence[Sequence[Union[str, Sequence[str]]]], n: int = 4):
    """
    Corpus BLEU@n with its clipped n-gram statistics.

    Args:
        candidates: Captions, as text or token lists
        references: One or more references per candidate
        n: Highest n-gram order

    Returns:
        The sacrebleu score object (``score`` is in percent)
    """
    if not candidates:
        raise DataError("BLEU needs at least one candidate caption")
    if len(references) != len(candidates) or any(len(refs) == 0 for refs in references):
        raise DataError("BLEU needs at least one reference for every candidate")
    hypotheses = [_as_text(c) for c in candidates]
    streams = _reference_streams([[_as_text(r) for r in refs] for refs in references])
    return _bleu_scorer(n).corpus_score(hypotheses, streams)


def bleu(candidates, references, n: int = 4) -> float:
    """Corpus BLEU@n in [0, 1] with uniform weights, clipped counts and the brevity penalty."""
    return bleu_score(candidates, references, n).score / 100.0


def clipped_precisions(candidates, references, n: int = 4) -> List[float]:
    """Clipped n-gram precision for orders 1..n."""
    result = bleu_score(candidates, references, n)
    return [c / t if t else 0.0 for c, t in zip(result.counts, result.totals)]


def dense_caption_bleu(pred: Mapping[str, Sequence[PredictedSegment]], gt: GroundTruth,
                       thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
                       orders: Sequence[int] = (3, 4)) -> Dict[str, float]:
    """
    BLEU of captioned predictions against the sentences of the segments they overlap.

    For each threshold a predicted caption is paired with every ground-truth
    sentence whose segment reaches the threshold, or with a placeholder that
    matches nothing. BLEU is computed per video over its pairs, averaged over
    the ground-truth videos and then over thresholds.

    Args:
        pred: Captioned predictions per video id
        gt: Ground truth per video id
        thresholds: tIoU thresholds
        orders: BLEU orders to report

    Returns:
        Mapping such as {"bleu@3": ..., "bleu@4": ...} with values in [0, 1]
    """
    thresholds = validate_thresholds(thresholds)
    segments = _segments_by_video(gt)
    totals = {n: [] for n in orders}
    for t in thresholds:
        per_video = {n: [] for n in orders}
        for video_id in sorted(segments):
            candidates, references = [], []
            for p in pred.get(video_id, []):
                if p.sentence is None:
                    continue
                overlapping = [g.sentence for g in segments[video_id] if tiou((p.start, p.end), (g.start, g.end)) >= t]
                for sentence in overlapping or [NO_MATCH_REFERENCE]:
                    candidates.append(p.sentence)
                    references.append([sentence])
            for n in orders:
                per_video[n].append(bleu(candidates, references, n) if candidates else 0.0)
        for n in orders:
            totals[n].append(math.fsum(per_video[n]) / len(per_video[n]))
    return {f"bleu@{n}": math.fsum(values) / len(values) for n, values in totals.items()}
