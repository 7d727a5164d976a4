"""
Attention - Scaled dot-product and multi-headed attention with cross-dimensional inputs

Queries may live in a different feature space than keys and values
(D_q != D_k); every head maps both into an internal slice of width D_in/H.
"""

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from bimodal_captioner.core import ops
from bimodal_captioner.core.module import Dropout, Module, xavier_uniform
from bimodal_captioner.core.tensor import Parameter, Tensor
from bimodal_captioner.errors import ConfigurationError, ContractError, DimensionError


@dataclass(frozen=True)
class MultiHeadConfig:
    """Sizes of one multi-headed attention block."""

    heads: int
    d_q: int
    d_k: int
    d_in: Optional[int] = None
    dropout: float = 0.0

    def __post_init__(self):
        if self.d_in is None:
            object.__setattr__(self, "d_in", self.d_q)
        if min(self.heads, self.d_q, self.d_k, self.d_in) <= 0:
            raise ConfigurationError(f"attention sizes must be positive: {self}")
        if self.d_in % self.heads != 0:
            raise ConfigurationError(f"internal size D_in={self.d_in} is not divisible by H={self.heads}")

    @property
    def head_width(self) -> int:
        return self.d_in // self.heads


@dataclass(frozen=True)
class AttentionMask:
    """Boolean T_q×T_k matrix, True where a query may attend to a key."""

    kind: str
    matrix: np.ndarray

    def __post_init__(self):
        if self.kind not in ("padding", "causal", "combined"):
            raise ConfigurationError(f"unknown mask kind '{self.kind}'")
        if self.kind == "causal" and np.triu(self.matrix, k=1).any():
            raise ContractError("a causal mask must be lower-triangular")

    @classmethod
    def padding(cls, key_mask: np.ndarray, query_len: int) -> "AttentionMask":
        """Every query may attend to the real (unpadded) keys."""
        key_mask = np.asarray(key_mask, dtype=bool)
        return cls("padding", np.tile(key_mask, (query_len, 1)))

    @classmethod
    def causal(cls, length: int) -> "AttentionMask":
        return cls("causal", np.tril(np.ones((length, length), dtype=bool)))

    @classmethod
    def combined(cls, key_mask: np.ndarray) -> "AttentionMask":
        """Causal pattern intersected with key padding, for caption self-attention."""
        key_mask = np.asarray(key_mask, dtype=bool)
        length = key_mask.shape[0]
        return cls("combined", np.tril(np.ones((length, length), dtype=bool)) & key_mask[None, :])

    @property
    def shape(self):
        return self.matrix.shape


MaskLike = Union[AttentionMask, np.ndarray, None]


def _mask_matrix(mask: MaskLike) -> Optional[np.ndarray]:
    if mask is None:
        return None
    return mask.matrix if isinstance(mask, AttentionMask) else np.asarray(mask, dtype=bool)


def scaled_dot_product_attention(q: Tensor, k: Tensor, v: Tensor, mask: MaskLike = None,
                                 dropout_p: float = 0.0, rng: Optional[np.random.Generator] = None,
                                 training: bool = False) -> Tensor:
    """
    Softmax(Q·Kᵀ/√d)·V with masked logits excluded and dropout after the softmax.

    Args:
        q: Queries, T_q×d
        k: Keys, T_k×d
        v: Values, T_k×d_v
        mask: Optional T_q×T_k mask
        dropout_p: Dropout probability applied to the attention weights
        rng: Generator for the dropout mask
        training: Whether dropout is active

    Returns:
        Tensor of shape T_q×d_v
    """
    if q.shape[1] != k.shape[1] or k.shape[0] != v.shape[0]:
        raise DimensionError(f"attention: Q {q.shape}, K {k.shape}, V {v.shape} do not agree")
    scores = ops.scale(ops.matmul(q, ops.transpose(k)), 1.0 / np.sqrt(q.shape[1]))
    weights = ops.softmax_rows(scores, _mask_matrix(mask))
    weights = ops.dropout(weights, dropout_p, rng, training)
    return ops.matmul(weights, v)


class MultiHeadAttention(Module):
    """H attention heads over projected inputs, concatenated and mapped back to D_q."""

    def __init__(self, cfg: MultiHeadConfig, rng: np.random.Generator):
        """
        Initialize the attention block.

        Args:
            cfg: Block sizes and dropout
            rng: Seeded generator for weights and dropout masks
        """
        super().__init__()
        self.cfg = cfg
        width = cfg.head_width
        self.w_q = [self.add_parameter(f"Wq.head{h}", Parameter(xavier_uniform(rng, (cfg.d_q, width), cfg.d_q, width)))
                    for h in range(cfg.heads)]
        self.w_k = [self.add_parameter(f"Wk.head{h}", Parameter(xavier_uniform(rng, (cfg.d_k, width), cfg.d_k, width)))
                    for h in range(cfg.heads)]
        self.w_v = [self.add_parameter(f"Wv.head{h}", Parameter(xavier_uniform(rng, (cfg.d_k, width), cfg.d_k, width)))
                    for h in range(cfg.heads)]
        self.Wout = Parameter(xavier_uniform(rng, (cfg.d_in, cfg.d_q), cfg.d_in, cfg.d_q))
        self.attn_dropout = Dropout(cfg.dropout, rng)

    def __call__(self, q: Tensor, k: Tensor, v: Tensor, mask: MaskLike = None) -> Tensor:
        """
        Attend from ``q`` to ``k``/``v``.

        Args:
            q: Tensor T_q×D_q
            k: Tensor T_k×D_k
            v: Tensor T_k×D_k
            mask: Optional T_q×T_k mask

        Returns:
            Tensor T_q×D_q
        """
        if q.shape[1] != self.cfg.d_q or k.shape[1] != self.cfg.d_k or v.shape[1] != self.cfg.d_k:
            raise DimensionError(
                f"attention expects D_q={self.cfg.d_q}, D_k={self.cfg.d_k}; got q {q.shape}, k {k.shape}, v {v.shape}"
            )
        heads = []
        for w_q, w_k, w_v in zip(self.w_q, self.w_k, self.w_v):
            heads.append(scaled_dot_product_attention(
                ops.matmul(q, w_q), ops.matmul(k, w_k), ops.matmul(v, w_v), mask,
                self.attn_dropout.p, self.attn_dropout.rng, self.training,
            ))
        merged = heads[0] if len(heads) == 1 else ops.concat(heads, axis=-1)
        return ops.matmul(merged, self.Wout)


def multi_head_attention(q: Tensor, k: Tensor, v: Tensor, attention: MultiHeadAttention,
                         mask: MaskLike = None) -> Tensor:
    """Functional entry point to a MultiHeadAttention block."""
    return attention(q, k, v, mask)
