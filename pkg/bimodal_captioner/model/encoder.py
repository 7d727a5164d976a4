"""
Encoder - N-layer bi-modal encoder over audio and visual feature streams

Each bi-modal layer runs self-attention on both streams, then cross-attention
with queries from one stream and keys/values from the other, then a
position-wise network per stream. The uni-modal variant used for ablations
keeps only self-attention and the position-wise network of one stream.
"""

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from bimodal_captioner.core import ops
from bimodal_captioner.core.attention import AttentionMask, MultiHeadAttention, MultiHeadConfig
from bimodal_captioner.core.module import Dropout, LayerNorm, Module
from bimodal_captioner.core.tensor import Tensor, as_tensor
from bimodal_captioner.data.batching import PaddedSequence
from bimodal_captioner.data.features import FeatureSequence
from bimodal_captioner.errors import ConfigurationError, ContractError, DimensionError
from bimodal_captioner.model.sublayers import PositionwiseFeedForward, ResidualConnection, positional_encoding

MODALITY_CHOICES = ("bimodal", "audio", "visual")


@dataclass(frozen=True)
class EncoderConfig:
    """Encoder sizes; ``d_in`` is the internal width of the cross-modal attentions."""

    layers: int
    d_a: int
    d_v: int
    heads: int
    d_in: int
    dropout: float = 0.1
    modality: str = "bimodal"
    final_norm: bool = True

    def __post_init__(self):
        if self.layers < 0:
            raise ConfigurationError(f"encoder layer count must be non-negative, got {self.layers}")
        if min(self.d_a, self.d_v, self.heads, self.d_in) <= 0:
            raise ConfigurationError(f"encoder sizes must be positive: {self}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.modality not in MODALITY_CHOICES:
            raise ConfigurationError(f"modality must be one of {MODALITY_CHOICES}, got '{self.modality}'")

    @property
    def uses_audio(self) -> bool:
        return self.modality in ("bimodal", "audio")

    @property
    def uses_visual(self) -> bool:
        return self.modality in ("bimodal", "visual")


@dataclass
class BiModalFeatures:
    """
    Encoder output: visual-attended audio and audio-attended visual features.

    In uni-modal runs the absent stream and its mask are None.
    """

    A_v: Optional[Tensor]
    V_a: Optional[Tensor]
    audio_mask: Optional[np.ndarray] = None
    visual_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.A_v is not None:
            if self.audio_mask is None:
                self.audio_mask = np.ones(self.A_v.shape[0], dtype=bool)
            if self.audio_mask.shape != (self.A_v.shape[0],):
                raise DimensionError(f"audio mask {self.audio_mask.shape} does not match A_v {self.A_v.shape}")
        if self.V_a is not None:
            if self.visual_mask is None:
                self.visual_mask = np.ones(self.V_a.shape[0], dtype=bool)
            if self.visual_mask.shape != (self.V_a.shape[0],):
                raise DimensionError(f"visual mask {self.visual_mask.shape} does not match V_a {self.V_a.shape}")

    def stream(self, modality: str) -> Tuple[Tensor, np.ndarray]:
        """Features and pad mask of one modality."""
        if modality == "audio":
            return self.A_v, self.audio_mask
        return self.V_a, self.visual_mask


class BiModalEncoderLayer(Module):
    """One encoder layer with distinct weights for every sub-layer."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        super().__init__()
        self.self_att_a = MultiHeadAttention(MultiHeadConfig(cfg.heads, cfg.d_a, cfg.d_a, dropout=cfg.dropout), rng)
        self.self_att_v = MultiHeadAttention(MultiHeadConfig(cfg.heads, cfg.d_v, cfg.d_v, dropout=cfg.dropout), rng)
        self.bi_att_av = MultiHeadAttention(
            MultiHeadConfig(cfg.heads, cfg.d_a, cfg.d_v, d_in=cfg.d_in, dropout=cfg.dropout), rng
        )
        self.bi_att_va = MultiHeadAttention(
            MultiHeadConfig(cfg.heads, cfg.d_v, cfg.d_a, d_in=cfg.d_in, dropout=cfg.dropout), rng
        )
        self.ff_a = PositionwiseFeedForward(cfg.d_a, cfg.dropout, rng)
        self.ff_v = PositionwiseFeedForward(cfg.d_v, cfg.dropout, rng)
        self.res_self_a = ResidualConnection(cfg.d_a, cfg.dropout, rng)
        self.res_self_v = ResidualConnection(cfg.d_v, cfg.dropout, rng)
        self.res_bi_a = ResidualConnection(cfg.d_a, cfg.dropout, rng)
        self.res_bi_v = ResidualConnection(cfg.d_v, cfg.dropout, rng)
        self.res_ff_a = ResidualConnection(cfg.d_a, cfg.dropout, rng)
        self.res_ff_v = ResidualConnection(cfg.d_v, cfg.dropout, rng)

    def __call__(self, A: Tensor, V: Tensor, audio_mask: np.ndarray,
                 visual_mask: np.ndarray) -> Tuple[Tensor, Tensor]:
        """
        Run one layer.

        Args:
            A: Audio stream, T_a×d_a
            V: Visual stream, T_v×d_v
            audio_mask: Real audio rows, length T_a
            visual_mask: Real visual rows, length T_v

        Returns:
            Updated (audio, visual) streams with unchanged shapes
        """
        t_a, t_v = A.shape[0], V.shape[0]
        if audio_mask.shape != (t_a,) or visual_mask.shape != (t_v,):
            raise DimensionError(
                f"encoder masks {audio_mask.shape}/{visual_mask.shape} do not match streams {A.shape}/{V.shape}"
            )
        a_self_mask = AttentionMask.padding(audio_mask, t_a)
        v_self_mask = AttentionMask.padding(visual_mask, t_v)

        A_self = self.res_self_a(A, lambda x: self.self_att_a(x, x, x, a_self_mask))
        V_self = self.res_self_v(V, lambda x: self.self_att_v(x, x, x, v_self_mask))

        # Queries from one stream, keys and values from the other
        A_v = self.res_bi_a(A_self, lambda x: self.bi_att_av(x, V_self, V_self, AttentionMask.padding(visual_mask, t_a)))
        V_a = self.res_bi_v(V_self, lambda x: self.bi_att_va(x, A_self, A_self, AttentionMask.padding(audio_mask, t_v)))

        return self.res_ff_a(A_v, self.ff_a), self.res_ff_v(V_a, self.ff_v)


class UniModalEncoderLayer(Module):
    """Self-attention and position-wise network over a single stream."""

    def __init__(self, d: int, cfg: EncoderConfig, rng: np.random.Generator):
        super().__init__()
        self.self_att = MultiHeadAttention(MultiHeadConfig(cfg.heads, d, d, dropout=cfg.dropout), rng)
        self.ff = PositionwiseFeedForward(d, cfg.dropout, rng)
        self.res_self = ResidualConnection(d, cfg.dropout, rng)
        self.res_ff = ResidualConnection(d, cfg.dropout, rng)

    def __call__(self, X: Tensor, mask: np.ndarray) -> Tensor:
        if mask.shape != (X.shape[0],):
            raise DimensionError(f"encoder mask {mask.shape} does not match stream {X.shape}")
        self_mask = AttentionMask.padding(mask, X.shape[0])
        X = self.res_self(X, lambda x: self.self_att(x, x, x, self_mask))
        return self.res_ff(X, self.ff)


ArrayOrTensor = Union[np.ndarray, Tensor]


class BiModalEncoder(Module):
    """Positional encoding, dropout, and a stack of N encoder layers with a final LayerNorm per stream."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        """
        Initialize the encoder.

        Args:
            cfg: Encoder configuration
            rng: Seeded generator for weights and dropout masks
        """
        super().__init__()
        self.cfg = cfg
        self.input_dropout = Dropout(cfg.dropout, rng)
        self.layers = []
        for i in range(cfg.layers):
            if cfg.modality == "bimodal":
                layer = BiModalEncoderLayer(cfg, rng)
            else:
                layer = UniModalEncoderLayer(cfg.d_a if cfg.modality == "audio" else cfg.d_v, cfg, rng)
            self.layers.append(self.add_module(f"layer{i}", layer))
        if cfg.layers > 0 and cfg.final_norm:
            if cfg.uses_audio:
                self.norm_a = LayerNorm(cfg.d_a)
            if cfg.uses_visual:
                self.norm_v = LayerNorm(cfg.d_v)

    def _embed(self, values: Optional[ArrayOrTensor], width: int, name: str) -> Tensor:
        if values is None:
            raise ContractError(f"{self.cfg.modality} encoder needs {name} features")
        x = as_tensor(values)
        if x.ndim != 2 or x.shape[0] == 0:
            raise ContractError(f"{name} features must be a non-empty T×d matrix, got {x.shape}")
        if x.shape[1] != width:
            raise DimensionError(f"{name} features have width {x.shape[1]}, encoder expects {width}")
        return self.input_dropout(ops.add(x, positional_encoding(x.shape[0], width)))

    def __call__(self, audio: Optional[ArrayOrTensor], visual: Optional[ArrayOrTensor],
                 audio_mask: Optional[np.ndarray] = None,
                 visual_mask: Optional[np.ndarray] = None) -> BiModalFeatures:
        """
        Encode padded or unpadded feature matrices.

        Args:
            audio: Audio features T_a×d_a (ignored by visual-only encoders)
            visual: Visual features T_v×d_v (ignored by audio-only encoders)
            audio_mask: Real audio rows; all rows when omitted
            visual_mask: Real visual rows; all rows when omitted

        Returns:
            The encoded streams with their masks
        """
        A = V = None
        if self.cfg.uses_audio:
            A = self._embed(audio, self.cfg.d_a, "audio")
            audio_mask = np.ones(A.shape[0], dtype=bool) if audio_mask is None else np.asarray(audio_mask, dtype=bool)
        if self.cfg.uses_visual:
            V = self._embed(visual, self.cfg.d_v, "visual")
            visual_mask = np.ones(V.shape[0], dtype=bool) if visual_mask is None else np.asarray(visual_mask, dtype=bool)

        for layer in self.layers:
            if self.cfg.modality == "bimodal":
                A, V = layer(A, V, audio_mask, visual_mask)
            elif A is not None:
                A = layer(A, audio_mask)
            else:
                V = layer(V, visual_mask)

        if "norm_a" in self._modules:
            A = self.norm_a(A)
        if "norm_v" in self._modules:
            V = self.norm_v(V)
        return BiModalFeatures(
            A, V,
            audio_mask if self.cfg.uses_audio else None,
            visual_mask if self.cfg.uses_visual else None,
        )


def encoder_layer(A_prev: Tensor, V_prev: Tensor, layer: BiModalEncoderLayer,
                  audio_mask: Optional[np.ndarray] = None,
                  visual_mask: Optional[np.ndarray] = None) -> Tuple[Tensor, Tensor]:
    """Apply a single bi-modal encoder layer, defaulting to unpadded masks."""
    if audio_mask is None:
        audio_mask = np.ones(A_prev.shape[0], dtype=bool)
    if visual_mask is None:
        visual_mask = np.ones(V_prev.shape[0], dtype=bool)
    return layer(A_prev, V_prev, audio_mask, visual_mask)


def encode(audio: Union[FeatureSequence, PaddedSequence, None],
           visual: Union[FeatureSequence, PaddedSequence, None],
           encoder: BiModalEncoder) -> BiModalFeatures:
    """
    Encode a pair of feature sequences.

    Args:
        audio: Audio sequence, plain or padded
        visual: Visual sequence, plain or padded
        encoder: The encoder to run

    Returns:
        Encoded streams carrying the pad masks
    """
    def unpack(sequence):
        if sequence is None:
            return None, None
        if isinstance(sequence, PaddedSequence):
            return sequence.values, sequence.mask
        return sequence.matrix, None

    audio_values, audio_mask = unpack(audio)
    visual_values, visual_mask = unpack(visual)
    return encoder(audio_values, visual_values, audio_mask, visual_mask)
