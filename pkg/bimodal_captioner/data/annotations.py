"""
Annotations - Ground-truth event segments and prediction records

Ground truth follows the public ActivityNet Captions schema:
    {video_id: {"duration": float, "timestamps": [[start, end], ...], "sentences": [...]}}
Predictions follow the schema consumed by the public dense-captioning evaluator:
    {"version": ..., "results": {video_id: [{"timestamp": [start, end], "score": c, "sentence": s}]}}
"""

import json
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Union

from bimodal_captioner.errors import DataError, FormatError

PREDICTION_VERSION = "VERSION 1.0"


@dataclass(frozen=True)
class EventSegment:
    """A ground-truth interval in seconds with its sentence."""

    start: float
    end: float
    sentence: str = ""

    @property
    def length(self) -> float:
        return self.end - self.start

    @property
    def center(self) -> float:
        return 0.5 * (self.start + self.end)


@dataclass(frozen=True)
class PredictedSegment:
    """A predicted interval with its confidence and, once captioned, a sentence."""

    start: float
    end: float
    confidence: float
    sentence: Optional[str] = None


@dataclass
class VideoAnnotation:
    video_id: str
    duration: float
    segments: List[EventSegment] = field(default_factory=list)


class AnnotationSet:
    """Ground-truth annotations keyed by video id, in file order."""

    def __init__(self, videos: Optional[List[VideoAnnotation]] = None):
        self.videos: "OrderedDict[str, VideoAnnotation]" = OrderedDict()
        for video in videos or []:
            self.add(video)

    def add(self, video: VideoAnnotation) -> None:
        if video.video_id in self.videos:
            raise DataError(f"duplicate video id '{video.video_id}'")
        for segment in video.segments:
            if not (0.0 <= segment.start < segment.end):
                raise DataError(
                    f"video '{video.video_id}': segment [{segment.start}, {segment.end}] violates 0 <= start < end"
                )
        self.videos[video.video_id] = video

    def __len__(self) -> int:
        return len(self.videos)

    def __iter__(self) -> Iterator[VideoAnnotation]:
        return iter(self.videos.values())

    def __getitem__(self, video_id: str) -> VideoAnnotation:
        return self.videos[video_id]

    def __contains__(self, video_id: str) -> bool:
        return video_id in self.videos

    def sentences(self) -> List[str]:
        return [s.sentence for video in self for s in video.segments]

    def segment_lengths(self) -> List[float]:
        return [s.length for video in self for s in video.segments]

    def to_json_dict(self) -> Dict:
        return {
            video.video_id: {
                "duration": video.duration,
                "timestamps": [[s.start, s.end] for s in video.segments],
                "sentences": [s.sentence for s in video.segments],
            }
            for video in self
        }


def _reject_duplicates(pairs):
    result = OrderedDict()
    for key, value in pairs:
        if key in result:
            raise DataError(f"duplicate key '{key}' (video ids must be unique)")
        result[key] = value
    return result


def _read_json(path: Union[str, Path]):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file '{path}' does not exist")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON ({e.msg})", offset=e.pos) from e


def parse_annotations(raw: Dict) -> AnnotationSet:
    """
    Build an AnnotationSet from a decoded ActivityNet-style dictionary.

    Args:
        raw: Mapping of video id to duration, timestamps and sentences

    Returns:
        The annotation set
    """
    annotations = AnnotationSet()
    for video_id, entry in raw.items():
        try:
            timestamps = entry["timestamps"]
            sentences = entry.get("sentences", [""] * len(timestamps))
            duration = float(entry["duration"])
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"video '{video_id}': malformed annotation entry ({e})") from e
        if len(sentences) != len(timestamps):
            raise FormatError(f"video '{video_id}': {len(timestamps)} timestamps but {len(sentences)} sentences")
        segments = [EventSegment(float(s), float(e), str(text)) for (s, e), text in zip(timestamps, sentences)]
        annotations.add(VideoAnnotation(str(video_id), duration, segments))
    return annotations


def load_annotations(path: Union[str, Path]) -> AnnotationSet:
    """Read an ActivityNet Captions style annotation file."""
    return parse_annotations(_read_json(path))


def load_predictions(path: Union[str, Path]) -> "OrderedDict[str, List[PredictedSegment]]":
    """
    Read a prediction file.

    Args:
        path: File path

    Returns:
        Mapping of video id to its predicted segments, sorted by confidence
    """
    raw = _read_json(path)
    if "results" not in raw:
        raise FormatError(f"{path}: prediction file has no 'results' section")
    predictions: "OrderedDict[str, List[PredictedSegment]]" = OrderedDict()
    for video_id, entries in raw["results"].items():
        try:
            segments = [
                PredictedSegment(float(e["timestamp"][0]), float(e["timestamp"][1]),
                                 float(e.get("score", 1.0)), e.get("sentence"))
                for e in entries
            ]
        except (KeyError, TypeError, ValueError, IndexError) as e:
            raise FormatError(f"{path}: malformed prediction for video '{video_id}' ({e})") from e
        predictions[video_id] = sorted(segments, key=lambda s: (-s.confidence, s.start, s.end))
    return predictions


def predictions_to_json(predictions: Dict[str, List[PredictedSegment]], external: Optional[Dict] = None) -> Dict:
    """Render predictions in the evaluator schema (sentences only where present)."""
    results = {}
    for video_id, segments in predictions.items():
        records = []
        for s in segments:
            record = {"timestamp": [s.start, s.end], "score": s.confidence}
            if s.sentence is not None:
                record["sentence"] = s.sentence
            records.append(record)
        results[video_id] = records
    return {"version": PREDICTION_VERSION, "results": results, "external_data": external or {"used": False}}
