"""
Gradcheck - Central finite-difference verification of backward gradients
"""

from typing import Callable, List, Sequence

import numpy as np

from bimodal_captioner.core.tensor import Tensor, backward, no_grad


def numerical_gradients(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-5) -> List[np.ndarray]:
    """
    Estimate d fn / d input for every input by central differences.

    Args:
        fn: Closure recomputing a scalar tensor from the current input values
        inputs: Tensors whose data is perturbed in place
        h: Step size

    Returns:
        One gradient estimate per input
    """
    estimates = []
    with no_grad():
        for tensor in inputs:
            estimate = np.zeros_like(tensor.data)
            flat = tensor.data.reshape(-1)
            flat_estimate = estimate.reshape(-1)
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + h
                upper = fn().item()
                flat[i] = original - h
                lower = fn().item()
                flat[i] = original
                flat_estimate[i] = (upper - lower) / (2.0 * h)
            estimates.append(estimate)
    return estimates


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise relative error between two gradient arrays."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


def check_gradients(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-5) -> float:
    """
    Compare backward gradients of ``fn`` with finite differences.

    Args:
        fn: Closure building a scalar loss from ``inputs`` (and any captured parameters)
        inputs: Tracked tensors to check
        h: Finite-difference step

    Returns:
        The largest relative error over the inputs
    """
    for tensor in inputs:
        tensor.zero_grad()
    backward(fn())
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in inputs]
    numeric = numerical_gradients(fn, inputs, h)
    return max(relative_error(a, n) for a, n in zip(analytic, numeric))
