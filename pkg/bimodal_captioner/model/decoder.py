"""
Decoder - N-layer bi-modal caption decoder with a bridge, and the word generator
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from bimodal_captioner.core import ops
from bimodal_captioner.core.attention import AttentionMask, MultiHeadAttention, MultiHeadConfig
from bimodal_captioner.core.module import Dropout, LayerNorm, Linear, Module
from bimodal_captioner.core.tensor import Tensor
from bimodal_captioner.errors import ConfigurationError, ContractError, DimensionError
from bimodal_captioner.model.encoder import MODALITY_CHOICES, BiModalFeatures
from bimodal_captioner.model.sublayers import PositionwiseFeedForward, ResidualConnection


@dataclass(frozen=True)
class DecoderConfig:
    """Decoder sizes; ``d_a``/``d_v`` are the widths of the encoder streams it attends to."""

    layers: int
    d_c: int
    heads: int
    d_in: int
    vocab_size: int
    d_a: int
    d_v: int
    dropout: float = 0.1
    modality: str = "bimodal"

    def __post_init__(self):
        if self.layers < 0:
            raise ConfigurationError(f"decoder layer count must be non-negative, got {self.layers}")
        if min(self.d_c, self.heads, self.d_in, self.d_a, self.d_v) <= 0:
            raise ConfigurationError(f"decoder sizes must be positive: {self}")
        if self.vocab_size < 5:
            raise ConfigurationError(f"vocabulary must hold the 4 special tokens and a word, got {self.vocab_size}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.modality not in MODALITY_CHOICES:
            raise ConfigurationError(f"modality must be one of {MODALITY_CHOICES}, got '{self.modality}'")


def caption_mask(token_mask: np.ndarray) -> AttentionMask:
    """Causal self-attention mask restricted to real caption tokens."""
    return AttentionMask.combined(token_mask)


class BiModalDecoderLayer(Module):
    """Caption self-attention, two parallel encoder-decoder attentions, bridge, position-wise network."""

    def __init__(self, cfg: DecoderConfig, rng: np.random.Generator):
        super().__init__()
        self.self_att = MultiHeadAttention(MultiHeadConfig(cfg.heads, cfg.d_c, cfg.d_c, dropout=cfg.dropout), rng)
        self.enc_dec_att_a = MultiHeadAttention(
            MultiHeadConfig(cfg.heads, cfg.d_c, cfg.d_a, d_in=cfg.d_in, dropout=cfg.dropout), rng
        )
        self.enc_dec_att_v = MultiHeadAttention(
            MultiHeadConfig(cfg.heads, cfg.d_c, cfg.d_v, d_in=cfg.d_in, dropout=cfg.dropout), rng
        )
        self.bridge = Linear(2 * cfg.d_c, cfg.d_c, rng)
        self.bridge_dropout = Dropout(cfg.dropout, rng)
        self.ff = PositionwiseFeedForward(cfg.d_c, cfg.dropout, rng)
        self.res_self = ResidualConnection(cfg.d_c, cfg.dropout, rng)
        self.res_enc_a = ResidualConnection(cfg.d_c, cfg.dropout, rng)
        self.res_enc_v = ResidualConnection(cfg.d_c, cfg.dropout, rng)
        self.res_ff = ResidualConnection(cfg.d_c, cfg.dropout, rng)

    def __call__(self, C: Tensor, enc: BiModalFeatures, self_mask: AttentionMask) -> Tensor:
        """
        Run one layer.

        Args:
            C: Caption stream, t×d_c
            enc: Encoder output for the same clip
            self_mask: Causal and padding mask, t×t

        Returns:
            Caption stream of the same shape
        """
        t = C.shape[0]
        C_self = self.res_self(C, lambda x: self.self_att(x, x, x, self_mask))

        # Both attentions read queries from C_self
        a_mask = AttentionMask.padding(enc.audio_mask, t)
        v_mask = AttentionMask.padding(enc.visual_mask, t)
        C_a = self.res_enc_a(C_self, lambda x: self.enc_dec_att_a(x, enc.A_v, enc.A_v, a_mask))
        C_v = self.res_enc_v(C_self, lambda x: self.enc_dec_att_v(x, enc.V_a, enc.V_a, v_mask))

        # Bridge: features concatenated, no residual
        C_av = ops.relu(self.bridge_dropout(self.bridge(ops.concat([C_a, C_v], axis=-1))))
        return self.res_ff(C_av, self.ff)


class UniModalDecoderLayer(Module):
    """Caption self-attention, a single encoder-decoder attention and the position-wise network."""

    def __init__(self, cfg: DecoderConfig, rng: np.random.Generator):
        super().__init__()
        self.modality = cfg.modality
        d_k = cfg.d_a if cfg.modality == "audio" else cfg.d_v
        self.self_att = MultiHeadAttention(MultiHeadConfig(cfg.heads, cfg.d_c, cfg.d_c, dropout=cfg.dropout), rng)
        self.enc_dec_att = MultiHeadAttention(
            MultiHeadConfig(cfg.heads, cfg.d_c, d_k, d_in=cfg.d_in, dropout=cfg.dropout), rng
        )
        self.ff = PositionwiseFeedForward(cfg.d_c, cfg.dropout, rng)
        self.res_self = ResidualConnection(cfg.d_c, cfg.dropout, rng)
        self.res_enc = ResidualConnection(cfg.d_c, cfg.dropout, rng)
        self.res_ff = ResidualConnection(cfg.d_c, cfg.dropout, rng)

    def __call__(self, C: Tensor, enc: BiModalFeatures, self_mask: AttentionMask) -> Tensor:
        memory, memory_mask = enc.stream(self.modality)
        cross_mask = AttentionMask.padding(memory_mask, C.shape[0])
        C = self.res_self(C, lambda x: self.self_att(x, x, x, self_mask))
        C = self.res_enc(C, lambda x: self.enc_dec_att(x, memory, memory, cross_mask))
        return self.res_ff(C, self.ff)


class CaptionDecoder(Module):
    """Stack of decoder layers followed by a final LayerNorm."""

    def __init__(self, cfg: DecoderConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        layer_cls = BiModalDecoderLayer if cfg.modality == "bimodal" else UniModalDecoderLayer
        self.layers = [self.add_module(f"layer{i}", layer_cls(cfg, rng)) for i in range(cfg.layers)]
        self.norm = LayerNorm(cfg.d_c)

    def __call__(self, C: Tensor, enc: BiModalFeatures, token_mask: Optional[np.ndarray] = None) -> Tensor:
        """
        Decode an embedded caption prefix.

        Args:
            C: Embedded caption, t×d_c
            enc: Encoder output
            token_mask: Real caption tokens; all tokens when omitted

        Returns:
            Decoded caption features, t×d_c
        """
        if C.ndim != 2 or C.shape[0] == 0:
            raise ContractError(f"decoder needs at least one caption token, got shape {C.shape}")
        if C.shape[1] != self.cfg.d_c:
            raise DimensionError(f"caption width {C.shape[1]} does not match d_c={self.cfg.d_c}")
        if token_mask is None:
            token_mask = np.ones(C.shape[0], dtype=bool)
        self_mask = caption_mask(token_mask)
        for layer in self.layers:
            C = layer(C, enc, self_mask)
        return self.norm(C)


def decoder_layer(C_prev: Tensor, enc: BiModalFeatures, layer: Module,
                  token_mask: Optional[np.ndarray] = None) -> Tensor:
    """Apply a single decoder layer with the causal mask built from ``token_mask``."""
    if C_prev.shape[0] == 0:
        raise ContractError("decoder needs at least one caption token")
    if token_mask is None:
        token_mask = np.ones(C_prev.shape[0], dtype=bool)
    return layer(C_prev, enc, caption_mask(token_mask))


class Generator(Module):
    """Affine map to vocabulary logits followed by a row-wise softmax."""

    def __init__(self, d_c: int, vocab_size: int, rng: np.random.Generator):
        super().__init__()
        self.proj = Linear(d_c, vocab_size, rng)

    def __call__(self, C_av: Tensor) -> Tensor:
        return ops.softmax_rows(self.proj(C_av))


def generate_distribution(C_av: Tensor, generator: Generator) -> Tensor:
    """Next-word distribution for every caption position (rows sum to 1)."""
    return generator(C_av)
