"""
Sublayers - Building blocks shared by the encoder and decoder stacks
"""

from typing import Callable, Optional

import numpy as np

from bimodal_captioner.core import ops
from bimodal_captioner.core.module import Dropout, LayerNorm, Linear, Module
from bimodal_captioner.core.tensor import Tensor
from bimodal_captioner.errors import ConfigurationError

# Width multiplier of the hidden layer in the position-wise networks
FF_MULTIPLIER = 4


def positional_encoding(length: int, d: int) -> Tensor:
    """
    Sinusoid position table: sin on even columns, cos on odd columns.

    Args:
        length: Number of positions
        d: Feature width (must be even)

    Returns:
        Untracked tensor of shape length×d
    """
    if d <= 0 or d % 2 != 0:
        raise ConfigurationError(f"positional encoding needs an even feature width, got {d}")
    positions = np.arange(length, dtype=np.float64)[:, None]
    rates = np.power(10000.0, np.arange(0, d, 2, dtype=np.float64) / d)
    table = np.zeros((length, d))
    table[:, 0::2] = np.sin(positions / rates)
    table[:, 1::2] = np.cos(positions / rates)
    return Tensor(table)


class ResidualConnection(Module):
    """Pre-norm residual wrapper: x + Dropout(sublayer(LayerNorm(x)))."""

    def __init__(self, d: int, dropout: float, rng: Optional[np.random.Generator]):
        super().__init__()
        self.norm = LayerNorm(d)
        self.dropout = Dropout(dropout, rng)

    def __call__(self, x: Tensor, sublayer: Callable[[Tensor], Tensor]) -> Tensor:
        return ops.add(x, self.dropout(sublayer(self.norm(x))))


class PositionwiseFeedForward(Module):
    """Two affine maps d -> 4d -> d with ReLU and dropout in between."""

    def __init__(self, d: int, dropout: float, rng: np.random.Generator):
        super().__init__()
        self.fc1 = Linear(d, FF_MULTIPLIER * d, rng)
        self.fc2 = Linear(FF_MULTIPLIER * d, d, rng)
        self.dropout = Dropout(dropout, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(self.dropout(ops.relu(self.fc1(x))))
