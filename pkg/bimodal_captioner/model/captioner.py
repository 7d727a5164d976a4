"""
Captioner - Encoder, caption embedding, decoder and generator combined into one model
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from bimodal_captioner.core import ops
from bimodal_captioner.core.module import Dropout, Embedding, Module
from bimodal_captioner.core.tensor import Tensor, no_grad
from bimodal_captioner.errors import ConfigurationError
from bimodal_captioner.model.decoder import CaptionDecoder, DecoderConfig, Generator
from bimodal_captioner.model.encoder import BiModalEncoder, BiModalFeatures, EncoderConfig
from bimodal_captioner.model.sublayers import positional_encoding


@dataclass
class CaptionResult:
    """Greedy decoding output; ``truncated`` is set when max_len was reached before the end token."""

    token_ids: List[int]
    truncated: bool


class BiModalTransformer(Module):
    """The captioning module: encodes a clip and predicts its caption word by word."""

    def __init__(self, encoder_cfg: EncoderConfig, decoder_cfg: DecoderConfig, rng: np.random.Generator):
        """
        Initialize the captioning model.

        Args:
            encoder_cfg: Encoder configuration
            decoder_cfg: Decoder configuration (its d_a/d_v/modality must match the encoder)
            rng: Seeded generator for weights and dropout masks
        """
        super().__init__()
        if (decoder_cfg.d_a, decoder_cfg.d_v, decoder_cfg.modality) != (
                encoder_cfg.d_a, encoder_cfg.d_v, encoder_cfg.modality):
            raise ConfigurationError("decoder stream widths and modality must match the encoder")
        self.encoder_cfg = encoder_cfg
        self.decoder_cfg = decoder_cfg
        self.encoder = BiModalEncoder(encoder_cfg, rng)
        self.embedding = Embedding(decoder_cfg.vocab_size, decoder_cfg.d_c, rng)
        self.caption_dropout = Dropout(decoder_cfg.dropout, rng)
        self.decoder = CaptionDecoder(decoder_cfg, rng)
        self.generator = Generator(decoder_cfg.d_c, decoder_cfg.vocab_size, rng)

    def embed_caption(self, token_ids: Sequence[int]) -> Tensor:
        """Word vectors plus positional encoding, followed by dropout."""
        embedded = self.embedding(token_ids)
        return self.caption_dropout(ops.add(embedded, positional_encoding(len(token_ids), self.decoder_cfg.d_c)))

    def decode(self, token_ids: Sequence[int], enc: BiModalFeatures,
               token_mask: Optional[np.ndarray] = None) -> Tensor:
        """
        Next-word distributions for a caption prefix.

        Args:
            token_ids: Decoder input ids, starting with the start token
            enc: Encoder output for the clip
            token_mask: Real (non-pad) tokens

        Returns:
            Tensor of shape t×vocab
        """
        return self.generator(self.decoder(self.embed_caption(token_ids), enc, token_mask))

    def __call__(self, audio, visual, token_ids: Sequence[int], audio_mask=None, visual_mask=None,
                 token_mask: Optional[np.ndarray] = None) -> Tensor:
        enc = self.encoder(audio, visual, audio_mask, visual_mask)
        return self.decode(token_ids, enc, token_mask)


def greedy_caption(model: BiModalTransformer, enc: BiModalFeatures, start_id: int, end_id: int,
                   max_len: int, banned_ids: Sequence[int] = ()) -> CaptionResult:
    """
    Decode a caption by repeatedly appending the most likely next word.

    Args:
        model: Trained captioning model
        enc: Encoder output for the clip
        start_id: Start token id
        end_id: End token id
        max_len: Maximum number of generated tokens
        banned_ids: Tokens never emitted, such as padding and the start token

    Returns:
        The generated ids (without start/end tokens) and the truncation flag
    """
    if max_len < 1:
        raise ConfigurationError(f"max_len must be at least 1, got {max_len}")
    was_training = model.training
    model.eval()
    banned = np.asarray(banned_ids, dtype=int)
    ids = [start_id]
    try:
        with no_grad():
            for _ in range(max_len):
                dist = model.decode(ids, enc)
                scores = dist.data[-1].copy()
                scores[banned] = -np.inf
                next_id = int(np.argmax(scores))
                if next_id == end_id:
                    return CaptionResult(ids[1:], truncated=False)
                ids.append(next_id)
    finally:
        model.train(was_training)
    return CaptionResult(ids[1:], truncated=True)
