"""
Optimizer - Adam with bias-corrected moment estimates
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from bimodal_captioner.core.tensor import Parameter
from bimodal_captioner.errors import ConfigurationError


@dataclass
class AdamState:
    """First and second moments per parameter, plus the step counter."""

    step: int = 0
    first: Dict[int, np.ndarray] = field(default_factory=dict)
    second: Dict[int, np.ndarray] = field(default_factory=dict)


def adam_step(params: Sequence[Parameter], grads: Sequence[Optional[np.ndarray]], lr: float, state: AdamState,
              betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> None:
    """
    Apply one Adam update in place.

    Args:
        params: Parameters to update
        grads: Gradient of each parameter (None leaves it unchanged)
        lr: Learning rate
        state: Moment estimates, updated in place
        betas: Moment decay rates
        eps: Denominator term
    """
    beta1, beta2 = betas
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for index, (param, grad) in enumerate(zip(params, grads)):
        if grad is None:
            continue
        m = state.first.get(index)
        v = state.second.get(index)
        m = (1.0 - beta1) * grad if m is None else beta1 * m + (1.0 - beta1) * grad
        v = (1.0 - beta2) * grad * grad if v is None else beta2 * v + (1.0 - beta2) * grad * grad
        state.first[index], state.second[index] = m, v
        param.data -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)


class Adam:
    """Adam over a fixed list of trainable parameters."""

    def __init__(self, params: Sequence[Parameter], lr: float = 5e-5,
                 betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        if lr <= 0:
            raise ConfigurationError(f"learning rate must be positive, got {lr}")
        self.params: List[Parameter] = [p for p in params if p.requires_grad]
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = AdamState()

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.lr, self.state, self.betas, self.eps)

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()
