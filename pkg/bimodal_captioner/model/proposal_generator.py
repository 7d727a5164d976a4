"""
Proposal Generator - Multi-headed, anchor-based temporal event proposals over both streams

Every head is a fully-convolutional network (kernel sizes k, 1, 1) that
predicts, at each position and for each anchor of its modality, a raw
(center, length, objectness) triple. Decoded predictions of all heads of
both modalities share one pool ranked by confidence. No NMS is applied.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from bimodal_captioner.core import ops
from bimodal_captioner.core.module import Conv1d, Dropout, Module
from bimodal_captioner.core.tensor import Tensor, no_grad
from bimodal_captioner.data.annotations import EventSegment
from bimodal_captioner.data.features import MODALITIES, FeatureSequence
from bimodal_captioner.errors import ConfigurationError, ContractError, DataError, DimensionError
from bimodal_captioner.model.encoder import BiModalEncoder, BiModalFeatures, EncoderConfig

# Raw length outputs are clamped to this range before exponentiation
LENGTH_CLAMP = 8.0
# Tolerance used when intersecting segment bounds with feature cells
_EDGE_EPS = 1e-9


@dataclass(frozen=True)
class AnchorSet:
    """Segment-length priors of one modality, in grid cells."""

    modality: str
    anchors: Tuple[float, ...]
    cell_seconds: float

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ConfigurationError(f"unknown modality '{self.modality}'")
        anchors = tuple(float(a) for a in self.anchors)
        object.__setattr__(self, "anchors", anchors)
        if not anchors or min(anchors) <= 0:
            raise ConfigurationError(f"{self.modality} anchors must be non-empty and positive, got {anchors}")
        if any(b <= a for a, b in zip(anchors, anchors[1:])):
            raise ConfigurationError(f"{self.modality} anchors must be sorted ascending, got {anchors}")
        if self.cell_seconds <= 0:
            raise ConfigurationError(f"cell_seconds must be positive, got {self.cell_seconds}")

    def __len__(self) -> int:
        return len(self.anchors)

    @property
    def seconds(self) -> List[float]:
        return [a * self.cell_seconds for a in self.anchors]

    def to_json(self) -> Dict:
        return {"modality": self.modality, "anchors": list(self.anchors), "cell_seconds": self.cell_seconds}

    @classmethod
    def from_json(cls, raw: Dict) -> "AnchorSet":
        return cls(raw["modality"], tuple(raw["anchors"]), float(raw["cell_seconds"]))


@dataclass(frozen=True)
class ProposalHeadConfig:
    kernel_size: int
    d: int
    anchors: int
    hidden: int = 512
    dropout: float = 0.1

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigurationError(f"proposal head kernel size must be odd and positive, got {self.kernel_size}")
        if min(self.d, self.anchors, self.hidden) <= 0:
            raise ConfigurationError(f"proposal head sizes must be positive: {self}")

    @property
    def output_width(self) -> int:
        return 3 * self.anchors


@dataclass(frozen=True)
class Proposal:
    """A decoded prediction in seconds, with the head cell it came from."""

    center: float
    length: float
    confidence: float
    modality: str = "audio"
    head: int = 0
    position: int = 0
    anchor_index: int = 0

    @property
    def start(self) -> float:
        return max(0.0, self.center - self.length / 2)

    @property
    def end(self) -> float:
        return self.center + self.length / 2


class ProposalHead(Module):
    """Three length-preserving convolutions with ReLU and dropout between them."""

    def __init__(self, cfg: ProposalHeadConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.conv1 = Conv1d(cfg.d, cfg.hidden, cfg.kernel_size, rng)
        self.conv2 = Conv1d(cfg.hidden, cfg.hidden, 1, rng)
        self.conv3 = Conv1d(cfg.hidden, cfg.output_width, 1, rng)
        self.dropout = Dropout(cfg.dropout, rng)

    def __call__(self, X: Tensor) -> Tensor:
        """
        Predict raw (c, l, o) for every position and anchor.

        Args:
            X: Encoded stream, T×d

        Returns:
            Tensor of shape T×|Ψ|×3
        """
        if X.ndim != 2 or X.shape[1] != self.cfg.d:
            raise DimensionError(f"proposal head expects T×{self.cfg.d} input, got {X.shape}")
        hidden = self.dropout(ops.relu(self.conv1(X)))
        hidden = self.dropout(ops.relu(self.conv2(hidden)))
        return ops.reshape(self.conv3(hidden), (X.shape[0], self.cfg.anchors, 3))


def proposal_head_forward(X: Tensor, head: ProposalHead) -> Tensor:
    return head(X)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


def decode_proposal(raw: Sequence[float], p: int, anchor: float, cell_seconds: float, modality: str = "audio",
                    head: int = 0, anchor_index: int = 0) -> Proposal:
    """
    Turn one raw head output into a proposal in seconds.

    Args:
        raw: The (c, l, o) triple
        p: Grid position of the prediction
        anchor: Anchor length in grid cells
        cell_seconds: Duration of a grid cell
        modality: Stream the head belongs to
        head: Head index within its modality
        anchor_index: Index of ``anchor`` in its anchor set

    Returns:
        The decoded proposal
    """
    if anchor <= 0:
        raise ContractError(f"anchor must be positive, got {anchor}")
    c, l, o = (float(v) for v in raw)
    center = (p + float(_sigmoid(np.float64(c)))) * cell_seconds
    length = anchor * float(np.exp(np.clip(l, -LENGTH_CLAMP, LENGTH_CLAMP))) * cell_seconds
    return Proposal(center, length, float(_sigmoid(np.float64(o))), modality, head, p, anchor_index)


class MultiHeadedProposalGenerator(Module):
    """An encoder feeding K heads per modality; heads of one modality share its anchor set."""

    def __init__(self, encoder_cfg: EncoderConfig, anchor_sets: Dict[str, AnchorSet],
                 kernel_sizes: Dict[str, Sequence[int]], rng: np.random.Generator,
                 hidden: int = 512, dropout: float = 0.1):
        """
        Initialize the proposal generator.

        Args:
            encoder_cfg: Configuration of the (usually pre-trained) encoder
            anchor_sets: Anchor set per used modality
            kernel_sizes: First-layer kernel size of every head, per used modality
            rng: Seeded generator for weights and dropout masks
            hidden: Width of the hidden convolutions
            dropout: Dropout between the convolutions
        """
        super().__init__()
        self.encoder_cfg = encoder_cfg
        self.encoder = BiModalEncoder(encoder_cfg, rng)
        self.anchor_sets: Dict[str, AnchorSet] = {}
        self.heads: Dict[str, List[ProposalHead]] = {}
        for modality, width in (("audio", encoder_cfg.d_a), ("visual", encoder_cfg.d_v)):
            used = encoder_cfg.uses_audio if modality == "audio" else encoder_cfg.uses_visual
            if not used:
                continue
            if modality not in anchor_sets or not kernel_sizes.get(modality):
                raise ConfigurationError(f"{modality} proposals need an anchor set and at least one kernel size")
            anchors = anchor_sets[modality]
            self.anchor_sets[modality] = anchors
            self.heads[modality] = [
                self.add_module(
                    f"{modality}_head{i}",
                    ProposalHead(ProposalHeadConfig(int(k), width, len(anchors), hidden, dropout), rng),
                )
                for i, k in enumerate(kernel_sizes[modality])
            ]

    def head_outputs(self, enc: BiModalFeatures) -> Dict[str, List[Tensor]]:
        """Raw T×|Ψ|×3 outputs of every head, keyed by modality."""
        outputs = {}
        for modality, heads in self.heads.items():
            stream, _ = enc.stream(modality)
            outputs[modality] = [head(stream) for head in heads]
        return outputs

    def __call__(self, audio, visual, audio_mask=None, visual_mask=None,
                 encoder_grad: bool = True) -> Tuple[BiModalFeatures, Dict[str, List[Tensor]]]:
        """
        Encode a video and run every head.

        Args:
            audio: Audio features (padded or not)
            visual: Visual features (padded or not)
            audio_mask: Real audio rows
            visual_mask: Real visual rows
            encoder_grad: Record the encoder forward pass for backpropagation

        Returns:
            The encoder output and the raw head outputs
        """
        if encoder_grad:
            enc = self.encoder(audio, visual, audio_mask, visual_mask)
        else:
            with no_grad():
                enc = self.encoder(audio, visual, audio_mask, visual_mask)
        return enc, self.head_outputs(enc)


def pool_size(t_a: int, k_a: int, anchors_a: int, t_v: int, k_v: int, anchors_v: int) -> int:
    """Number of proposals in the common pool: T_a·K_a·|Ψ_a| + T_v·K_v·|Ψ_v|."""
    return t_a * k_a * anchors_a + t_v * k_v * anchors_v


def generate_proposals(enc: BiModalFeatures, generator: MultiHeadedProposalGenerator, top_k: int = 100,
                       outputs: Optional[Dict[str, List[Tensor]]] = None) -> List[Proposal]:
    """
    Decode every head prediction at real positions and keep the most confident ones.

    Args:
        enc: Encoder output for the whole video
        generator: Proposal generator owning the heads and anchor sets
        top_k: Number of proposals to return
        outputs: Pre-computed head outputs for ``enc``

    Returns:
        Up to ``top_k`` proposals sorted by confidence (descending), then
        center, modality (audio first), head, position and anchor
    """
    if top_k <= 0:
        raise ConfigurationError(f"top_k must be positive, got {top_k}")
    if outputs is None:
        with no_grad():
            outputs = generator.head_outputs(enc)

    columns = {name: [] for name in ("center", "length", "confidence", "modality", "head", "position", "anchor")}
    for modality, head_outputs in outputs.items():
        anchor_set = generator.anchor_sets[modality]
        anchors = np.asarray(anchor_set.anchors)
        _, mask = enc.stream(modality)
        positions = np.flatnonzero(mask)
        for head_index, raw in enumerate(head_outputs):
            values = raw.data[positions]
            grid_p, grid_a = np.meshgrid(positions, np.arange(len(anchors)), indexing="ij")
            columns["center"].append(((grid_p + _sigmoid(values[..., 0])) * anchor_set.cell_seconds).ravel())
            columns["length"].append(
                (anchors[grid_a] * np.exp(np.clip(values[..., 1], -LENGTH_CLAMP, LENGTH_CLAMP))
                 * anchor_set.cell_seconds).ravel()
            )
            columns["confidence"].append(_sigmoid(values[..., 2]).ravel())
            columns["modality"].append(np.full(grid_p.size, MODALITIES.index(modality)))
            columns["head"].append(np.full(grid_p.size, head_index))
            columns["position"].append(grid_p.ravel())
            columns["anchor"].append(grid_a.ravel())

    if not columns["center"]:
        return []
    pool = {name: np.concatenate(parts) for name, parts in columns.items()}
    order = np.lexsort((pool["anchor"], pool["position"], pool["head"], pool["modality"],
                        pool["center"], -pool["confidence"]))[:top_k]
    return [
        Proposal(float(pool["center"][i]), float(pool["length"][i]), float(pool["confidence"][i]),
                 MODALITIES[int(pool["modality"][i])], int(pool["head"][i]), int(pool["position"][i]),
                 int(pool["anchor"][i]))
        for i in order
    ]


def _clip_rows(features: FeatureSequence, start: float, end: float) -> FeatureSequence:
    cell = features.cell_seconds
    index = np.arange(features.length)
    keep = (index * cell < end - _EDGE_EPS) & ((index + 1) * cell > start + _EDGE_EPS)
    if not keep.any():
        center = 0.5 * (start + end)
        row = int(np.clip(np.floor(center / cell), 0, features.length - 1))
        keep[row] = True
    return features.rows(keep)


def clip_features(audio: Optional[FeatureSequence], visual: Optional[FeatureSequence],
                  segment: EventSegment) -> Tuple[Optional[FeatureSequence], Optional[FeatureSequence]]:
    """
    Keep the rows of each stream whose time span intersects the segment.

    Args:
        audio: Whole-video audio features
        visual: Whole-video visual features
        segment: Interval in seconds

    Returns:
        Clipped (audio, visual); each keeps at least one row
    """
    if segment.end <= segment.start:
        raise ContractError(f"cannot clip features to an empty segment [{segment.start}, {segment.end}]")
    extent = max(s.duration for s in (audio, visual) if s is not None)
    if segment.start >= extent or segment.end <= 0:
        raise DataError(f"segment [{segment.start}, {segment.end}] lies outside the {extent:.2f}s of features")
    return (
        _clip_rows(audio, segment.start, segment.end) if audio is not None else None,
        _clip_rows(visual, segment.start, segment.end) if visual is not None else None,
    )
