"""
Synthetic - Planted-event bi-modal dataset for desk-scale training

Every video is a sequence of units lasting the least common multiple of the
two cell durations, so event boundaries fall exactly on both feature grids.
An event of type (audio motif, visual motif) adds a fixed positive pattern to
every audio and visual row it covers; its caption is templated from the motif
pair, so both the caption and the boundaries are recoverable from features.
"""

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from bimodal_captioner.data.annotations import AnnotationSet, EventSegment, VideoAnnotation
from bimodal_captioner.data.features import (
    AUDIO_CELL_SECONDS, VISUAL_CELL_SECONDS, FeatureSequence, encode_features, feature_paths,
)
from bimodal_captioner.data.vocabulary import SPECIALS, tokenize
from bimodal_captioner.errors import ConfigurationError
from bimodal_captioner.utils.logger import get_logger

logger = get_logger(__name__)

AUDIO_SOURCES = [
    ("dog", "barks"), ("bell", "rings"), ("drum", "beats"), ("siren", "wails"),
    ("bird", "sings"), ("engine", "roars"), ("piano", "plays"), ("crowd", "cheers"),
]
VISUAL_SCENES = [
    ("man", "runs"), ("woman", "dances"), ("child", "jumps"), ("player", "kicks"),
    ("cook", "chops"), ("rider", "turns"), ("swimmer", "dives"), ("painter", "paints"),
]

# Probe accuracy the dataset self-test must reach
PROBE_TARGET = 0.95


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of a synthetic dataset."""

    num_videos: int = 20
    d_a: int = 16
    d_v: int = 24
    vocab_size: int = 200
    pattern_strength: float = 4.0
    noise: float = 0.5
    seed: int = 0
    num_audio_motifs: int = 4
    num_visual_motifs: int = 4
    units_per_video: int = 10
    max_events: int = 3
    max_event_units: int = 3
    num_val_videos: int = 0
    audio_cell_seconds: float = AUDIO_CELL_SECONDS
    visual_cell_seconds: float = VISUAL_CELL_SECONDS

    def __post_init__(self):
        if min(self.num_videos, self.d_a, self.d_v, self.units_per_video, self.max_events,
               self.max_event_units, self.num_audio_motifs, self.num_visual_motifs) < 1:
            raise ConfigurationError(f"synthetic sizes must be positive: {self}")
        if self.num_audio_motifs > len(AUDIO_SOURCES) or self.num_visual_motifs > len(VISUAL_SCENES):
            raise ConfigurationError(
                f"at most {len(AUDIO_SOURCES)} audio and {len(VISUAL_SCENES)} visual motifs are available"
            )
        if self.pattern_strength <= 0 or self.noise < 0:
            raise ConfigurationError("pattern_strength must be positive and noise non-negative")
        if not 0 <= self.num_val_videos < self.num_videos:
            raise ConfigurationError(f"num_val_videos must lie in [0, {self.num_videos})")
        # Events need a gap unit on each side
        if self.units_per_video < self.max_event_units + 2:
            raise ConfigurationError("units_per_video must exceed max_event_units by at least 2")
        if len(SPECIALS) + len(template_words(self)) > self.vocab_size:
            raise ConfigurationError(f"template vocabulary exceeds vocab_size={self.vocab_size}")

    @classmethod
    def from_dict(cls, raw: Dict) -> "SynthSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigurationError(f"unknown synthetic spec keys: {sorted(unknown)}")
        return cls(**raw)

    def to_dict(self) -> Dict:
        return asdict(self)


def template_words(spec: SynthSpec) -> List[str]:
    words = set()
    for a in range(spec.num_audio_motifs):
        for v in range(spec.num_visual_motifs):
            words.update(tokenize(caption_for(a, v)))
    return sorted(words)


def caption_for(audio_motif: int, visual_motif: int) -> str:
    source, sound = AUDIO_SOURCES[audio_motif]
    subject, action = VISUAL_SCENES[visual_motif]
    return f"a {subject} {action} while a {source} {sound}"


def unit_seconds(audio_cell: float, visual_cell: float) -> Tuple[float, int, int]:
    """
    Least common multiple of the two cell durations.

    Returns:
        (unit duration in seconds, audio cells per unit, visual cells per unit)
    """
    a = Fraction(str(audio_cell))
    v = Fraction(str(visual_cell))
    unit = _fraction_lcm(a, v)
    return float(unit), int(unit / a), int(unit / v)


def _fraction_lcm(a: Fraction, b: Fraction) -> Fraction:
    common = a.denominator * b.denominator // math.gcd(a.denominator, b.denominator)
    x, y = int(a * common), int(b * common)
    return Fraction(x * y // math.gcd(x, y), common)


@dataclass
class SynthDataset:
    spec: SynthSpec
    annotations: AnnotationSet
    features: Dict[str, Tuple[FeatureSequence, FeatureSequence]]
    event_masks: Dict[str, np.ndarray]

    def split(self) -> Tuple[AnnotationSet, AnnotationSet]:
        """Training and validation annotations; validation is the training set when no videos are held out."""
        videos = list(self.annotations)
        held_out = self.spec.num_val_videos
        if held_out == 0:
            return self.annotations, self.annotations
        return AnnotationSet(videos[:-held_out]), AnnotationSet(videos[-held_out:])


def synth_dataset(spec: SynthSpec) -> SynthDataset:
    """
    Generate a dataset with planted events.

    Args:
        spec: Dataset parameters

    Returns:
        Features, annotations and per-visual-cell event masks
    """
    rng = np.random.default_rng(spec.seed)
    unit, audio_per_unit, visual_per_unit = unit_seconds(spec.audio_cell_seconds, spec.visual_cell_seconds)

    def motifs(count: int, d: int) -> np.ndarray:
        raw = np.abs(rng.normal(size=(count, d)))
        return spec.pattern_strength * raw / np.linalg.norm(raw, axis=1, keepdims=True)

    audio_motifs = motifs(spec.num_audio_motifs, spec.d_a)
    visual_motifs = motifs(spec.num_visual_motifs, spec.d_v)

    annotations = AnnotationSet()
    features = {}
    event_masks = {}
    t_a = spec.units_per_video * audio_per_unit
    t_v = spec.units_per_video * visual_per_unit
    for index in range(spec.num_videos):
        video_id = f"synth_{index:04d}"
        audio = rng.normal(scale=spec.noise, size=(t_a, spec.d_a))
        visual = rng.normal(scale=spec.noise, size=(t_v, spec.d_v))
        mask = np.zeros(t_v, dtype=bool)

        segments = []
        free = np.ones(spec.units_per_video, dtype=bool)
        for _ in range(int(rng.integers(1, spec.max_events + 1))):
            length = int(rng.integers(1, spec.max_event_units + 1))
            # Starts whose span and neighbouring units are free
            starts = [s for s in range(1, spec.units_per_video - length)
                      if free[s - 1:s + length + 1].all()]
            if not starts:
                break
            start = int(rng.choice(starts))
            free[start:start + length] = False
            a_motif = int(rng.integers(spec.num_audio_motifs))
            v_motif = int(rng.integers(spec.num_visual_motifs))
            audio[start * audio_per_unit:(start + length) * audio_per_unit] += audio_motifs[a_motif]
            visual[start * visual_per_unit:(start + length) * visual_per_unit] += visual_motifs[v_motif]
            mask[start * visual_per_unit:(start + length) * visual_per_unit] = True
            segments.append(EventSegment(round(start * unit, 6), round((start + length) * unit, 6),
                                         caption_for(a_motif, v_motif)))

        segments.sort(key=lambda s: s.start)
        annotations.add(VideoAnnotation(video_id, round(spec.units_per_video * unit, 6), segments))
        features[video_id] = (
            FeatureSequence("audio", audio.astype(np.float32).astype(np.float64), spec.audio_cell_seconds),
            FeatureSequence("visual", visual.astype(np.float32).astype(np.float64), spec.visual_cell_seconds),
        )
        event_masks[video_id] = mask
    return SynthDataset(spec, annotations, features, event_masks)


def pooled_cells(dataset: SynthDataset) -> Tuple[np.ndarray, np.ndarray]:
    """Per visual cell: the visual row joined with the mean of the audio rows it spans, and its event label."""
    _, audio_per_unit, visual_per_unit = unit_seconds(dataset.spec.audio_cell_seconds,
                                                      dataset.spec.visual_cell_seconds)
    rows, labels = [], []
    for video_id, (audio, visual) in dataset.features.items():
        for v in range(visual.length):
            a_start = int(np.floor(v * visual.cell_seconds / audio.cell_seconds + 1e-9))
            a_end = max(a_start + 1, int(np.ceil((v + 1) * visual.cell_seconds / audio.cell_seconds - 1e-9)))
            rows.append(np.concatenate([visual.matrix[v], audio.matrix[a_start:a_end].mean(axis=0)]))
            labels.append(dataset.event_masks[video_id][v])
    return np.asarray(rows), np.asarray(labels, dtype=np.float64)


def probe_accuracy(dataset: SynthDataset, steps: int = 500, lr: float = 0.5) -> float:
    """
    Fit a logistic-regression probe separating event from background cells.

    Args:
        dataset: Generated dataset
        steps: Gradient steps
        lr: Step size

    Returns:
        Training accuracy of the probe
    """
    x, y = pooled_cells(dataset)
    x = (x - x.mean(axis=0)) / (x.std(axis=0) + 1e-12)
    w = np.zeros(x.shape[1])
    b = 0.0
    for _ in range(steps):
        p = np.exp(-np.logaddexp(0.0, -(x @ w + b)))
        w -= lr * x.T @ (p - y) / len(y)
        b -= lr * float((p - y).mean())
    return float((((x @ w + b) > 0) == (y > 0.5)).mean())


def write_dataset(dataset: SynthDataset, out_dir: Union[str, Path], file_service) -> Dict[str, Path]:
    """
    Write features, annotations and the spec under ``out_dir``.

    Args:
        dataset: Generated dataset
        out_dir: Output directory
        file_service: FileService used for atomic writes

    Returns:
        Paths of the written annotation files and features directory
    """
    out_dir = Path(out_dir)
    features_dir = out_dir / "features"
    for video_id, (audio, visual) in dataset.features.items():
        audio_path, visual_path = feature_paths(features_dir, video_id)
        file_service.write_bytes_atomic(audio_path, encode_features(audio))
        file_service.write_bytes_atomic(visual_path, encode_features(visual))

    train, val = dataset.split()
    paths = {
        "features": features_dir,
        "annotations": out_dir / "annotations.json",
        "train": out_dir / "train.json",
        "val": out_dir / "val.json",
    }
    file_service.write_json_atomic(paths["annotations"], dataset.annotations.to_json_dict())
    file_service.write_json_atomic(paths["train"], train.to_json_dict())
    file_service.write_json_atomic(paths["val"], val.to_json_dict())
    file_service.write_json_atomic(out_dir / "spec.json", dataset.spec.to_dict())
    logger.info("Wrote %d synthetic videos to %s", len(dataset.annotations), out_dir)
    return paths
