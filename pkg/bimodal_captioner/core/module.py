"""
Module - Parameter containers and the basic layers built on core.ops
"""

from collections import OrderedDict
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from bimodal_captioner.core import ops
from bimodal_captioner.core.tensor import Parameter, Tensor
from bimodal_captioner.errors import DataError, DimensionError


def xavier_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    """
    Draw weights uniformly in ±sqrt(6 / (fan_in + fan_out)).

    Args:
        rng: Seeded generator
        shape: Weight shape
        fan_in: Number of inputs per output unit
        fan_out: Number of outputs per input unit

    Returns:
        The weight array
    """
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Module:
    """Base class for anything that owns parameters or sub-modules."""

    def __init__(self):
        object.__setattr__(self, "_parameters", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def add_parameter(self, name: str, parameter: Parameter) -> Parameter:
        """Register a parameter under an explicit path segment (may contain dots)."""
        self._parameters[name] = parameter
        return parameter

    def add_module(self, name: str, module: "Module") -> "Module":
        """Register a sub-module under an explicit path segment."""
        self._modules[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        """
        Iterate over parameters with their dotted paths.

        Args:
            prefix: Path of this module inside its parent

        Yields:
            (path, parameter) pairs in registration order
        """
        for name, parameter in self._parameters.items():
            yield (f"{prefix}.{name}" if prefix else name), parameter
        for name, module in self._modules.items():
            yield from module.named_parameters(f"{prefix}.{name}" if prefix else name)

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for module in self._modules.values():
            yield from module.modules()

    def train(self, mode: bool = True) -> "Module":
        for module in self.modules():
            object.__setattr__(module, "training", mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for parameter in self.parameters():
            parameter.zero_grad()

    def set_trainable(self, trainable: bool) -> None:
        """Freeze (False) or unfreeze (True) every parameter of this module."""
        for parameter in self.parameters():
            parameter.requires_grad = trainable
            if not trainable:
                parameter.zero_grad()

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((path, p.data.copy()) for path, p in self.named_parameters())

    def load_state_dict(self, state: Dict[str, np.ndarray], prefix: str = "", strict: bool = True) -> None:
        """
        Copy arrays into the parameters of this module.

        Args:
            state: Mapping of parameter path to array
            prefix: Only keys starting with ``prefix.`` are used, with the prefix stripped
            strict: Require every parameter to be present
        """
        if prefix:
            state = {k[len(prefix) + 1:]: v for k, v in state.items() if k.startswith(prefix + ".")}
        for path, parameter in self.named_parameters():
            if path not in state:
                if strict:
                    raise DataError(f"checkpoint is missing parameter '{prefix + '.' if prefix else ''}{path}'")
                continue
            value = np.asarray(state[path], dtype=parameter.data.dtype)
            if value.shape != parameter.shape:
                raise DimensionError(f"parameter '{path}' has shape {parameter.shape}, checkpoint {value.shape}")
            parameter.data[...] = value


class Linear(Module):
    """Affine layer x·W + b."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.weight = Parameter(xavier_uniform(rng, (d_in, d_out), d_in, d_out))
        self.bias = Parameter(np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        super().__init__()
        self.gain = Parameter(np.ones(d))
        self.bias = Parameter(np.zeros(d))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gain, self.bias, self.eps)


class Dropout(Module):
    """Inverted dropout drawing its masks from a shared seeded generator."""

    def __init__(self, p: float, rng: Optional[np.random.Generator]):
        super().__init__()
        self.p = p
        self.rng = rng

    def __call__(self, x: Tensor) -> Tensor:
        return ops.dropout(x, self.p, self.rng, self.training)


class Embedding(Module):
    """Lookup table mapping token ids to rows of a trainable matrix."""

    def __init__(self, vocab_size: int, d: int, rng: np.random.Generator):
        super().__init__()
        self.weight = Parameter(rng.normal(0.0, d ** -0.5, size=(vocab_size, d)))

    def load_pretrained(self, matrix: np.ndarray, freeze: bool = False) -> None:
        """
        Replace the table with pre-computed vectors.

        Args:
            matrix: Array of shape vocab_size×d
            freeze: Exclude the table from training
        """
        if matrix.shape != self.weight.shape:
            raise DimensionError(f"embedding matrix {matrix.shape} does not match table {self.weight.shape}")
        self.weight.data[...] = matrix
        self.weight.requires_grad = not freeze

    def __call__(self, ids) -> Tensor:
        return ops.take_rows(self.weight, ids)


class Conv1d(Module):
    """Length-preserving convolution over the time axis of a T×d sequence."""

    def __init__(self, d_in: int, d_out: int, kernel_size: int, rng: np.random.Generator):
        super().__init__()
        self.kernel_size = kernel_size
        self.kernels = Parameter(
            xavier_uniform(rng, (kernel_size, d_in, d_out), kernel_size * d_in, kernel_size * d_out)
        )
        self.bias = Parameter(np.zeros(d_out))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv1d(x, self.kernels, self.kernel_size, self.bias)
