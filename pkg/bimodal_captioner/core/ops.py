"""
Ops - Differentiable operations on Tensors

Broadcasting is restricted to identical shapes and scalar (shape ``()``)
operands. Row-wise bias addition goes through ``linear`` and ``conv1d``.
"""

from typing import Callable, Dict, Optional, Sequence, Union

import numpy as np

from bimodal_captioner.core.tensor import DTYPE, Tensor, as_tensor, make_result
from bimodal_captioner.errors import ConfigurationError, DegenerateMaskError, DimensionError

# Masked logits are pushed to this value before the softmax
MASK_VALUE = -1e30
# Floor for the argument of log
LOG_FLOOR = 1e-300

Operand = Union[Tensor, float, int]


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(grad: np.ndarray, shape) -> np.ndarray:
    # Scalar operands receive the sum of the broadcast gradient
    if shape == () and grad.shape != ():
        return np.asarray(grad.sum(), dtype=DTYPE)
    return grad


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product of two 2-D tensors.

    Args:
        a: Tensor of shape m×k
        b: Tensor of shape k×n

    Returns:
        Tensor of shape m×n
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not agree")

    def rule(g):
        return g @ b.data.T, a.data.T @ g

    return make_result(a.data @ b.data, (a, b), rule, "matmul")


def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def rule(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return make_result(a.data + b.data, (a, b), rule, "add")


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def rule(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return make_result(a.data - b.data, (a, b), rule, "sub")


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def rule(g):
        return _reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)

    return make_result(a.data * b.data, (a, b), rule, "mul")


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply by a constant Python scalar."""
    x = as_tensor(x)
    factor = float(factor)

    def rule(g):
        return (g * factor,)

    return make_result(x.data * factor, (x,), rule, "scale")


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    positive = x.data > 0

    def rule(g):
        return (g * positive,)

    return make_result(np.where(positive, x.data, 0.0), (x,), rule, "relu")


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = np.exp(-np.logaddexp(0.0, -x.data))

    def rule(g):
        return (g * out * (1.0 - out),)

    return make_result(out, (x,), rule, "sigmoid")


def exp(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)

    def rule(g):
        return (g * out,)

    return make_result(out, (x,), rule, "exp")


def log(x: Tensor) -> Tensor:
    """Natural logarithm with the argument floored at ``LOG_FLOOR``."""
    x = as_tensor(x)
    floored = np.maximum(x.data, LOG_FLOOR)

    def rule(g):
        return (g / floored,)

    return make_result(np.log(floored), (x,), rule, "log")


def softplus(x: Tensor) -> Tensor:
    """log(1 + exp(x)), computed without overflow."""
    x = as_tensor(x)

    def rule(g):
        return (g * np.exp(-np.logaddexp(0.0, -x.data)),)

    return make_result(np.logaddexp(0.0, x.data), (x,), rule, "softplus")


def clamp(x: Tensor, low: float, high: float) -> Tensor:
    """Clip values into [low, high]; the gradient is zero where clipping happened."""
    x = as_tensor(x)
    inside = (x.data >= low) & (x.data <= high)

    def rule(g):
        return (g * inside,)

    return make_result(np.clip(x.data, low, high), (x,), rule, "clamp")


ELEMENTWISE: Dict[str, Callable[..., Tensor]] = {
    "relu": relu,
    "sigmoid": sigmoid,
    "exp": exp,
    "add": add,
    "mul": mul,
    "scale": scale,
}


def elementwise(name: str, *args) -> Tensor:
    """
    Apply a pointwise operation by name.

    Args:
        name: One of relu, sigmoid, exp, add, mul, scale
        *args: Operands of the operation

    Returns:
        The pointwise result
    """
    if name not in ELEMENTWISE:
        raise ConfigurationError(f"unknown elementwise operation '{name}'")
    return ELEMENTWISE[name](*args)


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    """Sum of all elements, as a scalar tensor."""
    x = as_tensor(x)

    def rule(g):
        return (np.broadcast_to(g, x.shape).astype(DTYPE),)

    return make_result(np.asarray(x.data.sum(), dtype=DTYPE), (x,), rule, "sum")


def mean(x: Tensor) -> Tensor:
    x = as_tensor(x)
    return scale(sum(x), 1.0 / max(x.size, 1))


def transpose(x: Tensor) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"transpose needs a 2-D tensor, got shape {x.shape}")

    def rule(g):
        return (g.T,)

    return make_result(x.data.T, (x,), rule, "transpose")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)
    if int(np.prod(shape)) != x.size:
        raise DimensionError(f"cannot reshape {x.shape} into {shape}")

    def rule(g):
        return (g.reshape(x.shape),)

    return make_result(x.data.reshape(shape), (x,), rule, "reshape")


def getitem(x: Tensor, key) -> Tensor:
    """Basic or integer-array indexing; gradients scatter back with accumulation."""
    x = as_tensor(x)

    def rule(g):
        full = np.zeros(x.shape, dtype=DTYPE)
        np.add.at(full, key, g)
        return (full,)

    return make_result(np.array(x.data[key], dtype=DTYPE), (x,), rule, "getitem")


def take_rows(table: Tensor, ids: Sequence[int]) -> Tensor:
    """
    Gather rows of a 2-D table (embedding lookup).

    Args:
        table: Tensor of shape n×d
        ids: Row indices

    Returns:
        Tensor of shape len(ids)×d
    """
    index = np.asarray(ids, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= table.shape[0]):
        raise DimensionError(f"row index out of range for table of shape {table.shape}")
    return getitem(table, index)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    """Concatenate tensors along ``axis``."""
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat needs at least one tensor")
    axis = axis % tensors[0].ndim
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or any(
            t.shape[i] != tensors[0].shape[i] for i in range(t.ndim) if i != axis
        ):
            raise DimensionError(f"concat: shapes {tensors[0].shape} and {t.shape} disagree off axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def rule(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))
        )

    return make_result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), rule, "concat")


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """
    Affine map ``x·W + b`` with the bias added to every row.

    Args:
        x: Tensor of shape m×k
        weight: Tensor of shape k×n
        bias: Optional tensor of shape n

    Returns:
        Tensor of shape m×n
    """
    out = matmul(x, weight)
    if bias is None:
        return out
    if bias.shape != (out.shape[1],):
        raise DimensionError(f"linear: bias of shape {bias.shape} for output of shape {out.shape}")

    def rule(g):
        return g, g.sum(axis=0)

    return make_result(out.data + bias.data, (out, bias), rule, "add_bias")


def softmax_rows(x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Row-wise softmax, stabilized by subtracting the row maximum.

    Args:
        x: Tensor of shape m×n
        mask: Optional boolean array m×n, True where a position may receive mass

    Returns:
        Row-stochastic tensor; masked positions are exactly 0
    """
    x = as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"softmax_rows needs a 2-D tensor, got shape {x.shape}")
    logits = x.data
    if mask is not None:
        mask = np.asarray(mask.data if isinstance(mask, Tensor) else mask, dtype=bool)
        if mask.shape != x.shape:
            raise DimensionError(f"mask of shape {mask.shape} for logits of shape {x.shape}")
        empty = ~mask.any(axis=1)
        if empty.any():
            raise DegenerateMaskError(f"row {int(np.argmax(empty))} of the mask has no true entry")
        logits = np.where(mask, logits, MASK_VALUE)
    shifted = logits - logits.max(axis=1, keepdims=True)
    weights = np.exp(shifted)
    if mask is not None:
        weights = np.where(mask, weights, 0.0)
    out = weights / weights.sum(axis=1, keepdims=True)

    def rule(g):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return make_result(out, (x,), rule, "softmax_rows")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """
    Normalize the last dimension to zero mean and unit variance, then apply gain and bias.

    Args:
        x: Tensor of shape ...×d
        gain: Tensor of shape d
        bias: Tensor of shape d
        eps: Added to the variance

    Returns:
        Tensor of the same shape as ``x``
    """
    x = as_tensor(x)
    d = x.shape[-1] if x.ndim else 0
    if d == 0:
        raise DimensionError("layer_norm over an empty last dimension")
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"layer_norm: gain {gain.shape} / bias {bias.shape} for last dimension {d}")
    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    normed = centered * inv_std
    out = normed * gain.data + bias.data
    lead_axes = tuple(range(x.ndim - 1))

    def rule(g):
        d_normed = g * gain.data
        dx = inv_std * (
            d_normed
            - d_normed.mean(axis=-1, keepdims=True)
            - normed * (d_normed * normed).mean(axis=-1, keepdims=True)
        )
        return dx, (g * normed).sum(axis=lead_axes), g.sum(axis=lead_axes)

    return make_result(out, (x, gain, bias), rule, "layer_norm")


def conv1d(x: Tensor, kernels: Tensor, kernel_size: int, bias: Optional[Tensor] = None) -> Tensor:
    """
    Length-preserving 1-D convolution with stride 1 and symmetric zero padding.

    Args:
        x: Tensor of shape T×d_in
        kernels: Tensor of shape k×d_in×d_out
        kernel_size: Odd kernel size k
        bias: Optional tensor of shape d_out

    Returns:
        Tensor of shape T×d_out
    """
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ConfigurationError(f"conv1d kernel size must be odd and positive, got {kernel_size}")
    x = as_tensor(x)
    if x.ndim != 2 or kernels.ndim != 3 or kernels.shape[0] != kernel_size or kernels.shape[1] != x.shape[1]:
        raise DimensionError(f"conv1d: input {x.shape} and kernels {kernels.shape} (k={kernel_size}) disagree")
    steps = x.shape[0]
    pad = (kernel_size - 1) // 2
    padded = np.pad(x.data, ((pad, pad), (0, 0)))
    out = np.zeros((steps, kernels.shape[2]), dtype=DTYPE)
    for j in range(kernel_size):
        out += padded[j:j + steps] @ kernels.data[j]

    def rule(g):
        d_padded = np.zeros_like(padded)
        d_kernels = np.empty_like(kernels.data)
        for j in range(kernel_size):
            d_padded[j:j + steps] += g @ kernels.data[j].T
            d_kernels[j] = padded[j:j + steps].T @ g
        return d_padded[pad:pad + steps], d_kernels

    result = make_result(out, (x, kernels), rule, "conv1d")
    if bias is None:
        return result
    if bias.shape != (kernels.shape[2],):
        raise DimensionError(f"conv1d: bias of shape {bias.shape} for {kernels.shape[2]} output channels")

    def bias_rule(g):
        return g, g.sum(axis=0)

    return make_result(result.data + bias.data, (result, bias), bias_rule, "add_bias")


def dropout(x: Tensor, p: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """
    Inverted dropout: zero with probability ``p`` and rescale by 1/(1-p) while training.

    Args:
        x: Input tensor
        p: Drop probability in [0, 1)
        rng: Seeded generator drawing the mask
        training: Identity when False

    Returns:
        The (possibly) masked tensor
    """
    if not training or p <= 0.0:
        return x
    if p >= 1.0:
        raise ConfigurationError(f"dropout probability must be below 1, got {p}")
    if rng is None:
        raise ConfigurationError("dropout in training mode needs a random generator")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return mul(x, Tensor(keep))
