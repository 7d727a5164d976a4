"""
Tensor - Dense 64-bit arrays with reverse-mode automatic differentiation

Every operation in ``core.ops`` produces a new Tensor that remembers its
parents and a local-gradient rule. ``backward`` collects the operations
reachable from a scalar loss into a ComputationRecord and replays them in
reverse topological order.
"""

import threading
from contextlib import contextmanager
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from bimodal_captioner.errors import ContractError, DimensionError

DTYPE = np.float64

ArrayLike = Union[np.ndarray, float, int, Sequence]
BackwardRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_grad_state = threading.local()


def is_grad_enabled() -> bool:
    """Whether new operations are being recorded on this thread."""
    return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable operation recording on the current thread (evaluation, decoding)."""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


class Tensor:
    """An n-dimensional real array with optional gradient tracking."""

    def __init__(self, data: ArrayLike, requires_grad: bool = False,
                 parents: Tuple["Tensor", ...] = (), backward_rule: Optional[BackwardRule] = None,
                 op: str = "leaf"):
        """
        Initialize a tensor.

        Args:
            data: Array contents, converted to float64
            requires_grad: Whether gradients should be accumulated into ``grad``
            parents: Input tensors of the operation that produced this one
            backward_rule: Maps the output gradient to one gradient per parent
            op: Name of the producing operation (``leaf`` for inputs and parameters)
        """
        self.data = np.array(data, dtype=DTYPE, copy=True) if op == "leaf" else np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.parents = parents
        self.backward_rule = backward_rule
        self.op = op

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        """Return the value of a single-element tensor as a Python float."""
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        """Return a copy of the data."""
        return self.data.copy()

    def detach(self) -> "Tensor":
        """Return an untracked tensor sharing no history with this one."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        """Drop the accumulated gradient."""
        self.grad = None

    def backward(self) -> None:
        """Run reverse-mode differentiation from this scalar tensor."""
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # Operator overloads delegate to core.ops
    def __add__(self, other):
        from bimodal_captioner.core import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from bimodal_captioner.core import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from bimodal_captioner.core import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from bimodal_captioner.core import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from bimodal_captioner.core import ops
        if isinstance(other, Tensor):
            raise ContractError("division is only supported by Python scalars")
        return ops.scale(self, 1.0 / float(other))

    def __neg__(self):
        from bimodal_captioner.core import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from bimodal_captioner.core import ops
        return ops.matmul(self, other)

    def __getitem__(self, key):
        from bimodal_captioner.core import ops
        return ops.getitem(self, key)


class Parameter(Tensor):
    """A trainable leaf tensor owned by a Module."""

    def __init__(self, data: ArrayLike, requires_grad: bool = True):
        super().__init__(data, requires_grad=requires_grad)


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    """Wrap constants into untracked tensors; tensors pass through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def make_result(data: np.ndarray, parents: Tuple[Tensor, ...], backward_rule: BackwardRule, op: str) -> Tensor:
    """
    Build the output tensor of an operation, recording it when needed.

    Args:
        data: Computed output values
        parents: Operation inputs
        backward_rule: Local-gradient rule for the inputs
        op: Operation name

    Returns:
        The output tensor; tracked only if recording is on and any input is tracked
    """
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, backward_rule=backward_rule, op=op)
    return Tensor(data, op=op)


class ComputationRecord:
    """Ordered list of the recorded operations reachable from one output."""

    def __init__(self, output: Tensor):
        """
        Collect the tracked operations behind ``output`` in topological order.

        Args:
            output: Tensor whose history is recorded
        """
        self.output = output
        self.nodes: List[Tensor] = self._topological_order(output)

    @staticmethod
    def _topological_order(output: Tensor) -> List[Tensor]:
        order: List[Tensor] = []
        visited = set()
        stack = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited or not node.requires_grad:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node.parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def __len__(self) -> int:
        return len(self.nodes)

    def replay(self, seed: np.ndarray) -> None:
        """
        Propagate ``seed`` backwards through the record.

        Every use of an input contributes exactly one gradient term; terms are
        summed and then added to the ``grad`` accumulator of each tracked node.

        Args:
            seed: Gradient of the final quantity with respect to ``output``
        """
        pending = {id(self.output): seed}
        for node in reversed(self.nodes):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            node.grad = grad.copy() if node.grad is None else node.grad + grad
            if node.backward_rule is None:
                continue
            parent_grads = node.backward_rule(grad)
            for parent, parent_grad in zip(node.parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if parent_grad.shape != parent.shape:
                    raise DimensionError(
                        f"gradient of shape {parent_grad.shape} for input of shape {parent.shape} in '{node.op}'"
                    )
                key = id(parent)
                pending[key] = parent_grad if key not in pending else pending[key] + parent_grad


def backward(loss: Tensor) -> ComputationRecord:
    """
    Populate gradients of every tracked tensor reachable from ``loss``.

    Repeated calls without resetting ``grad`` accumulate.

    Args:
        loss: Scalar (shape ``()``) tensor

    Returns:
        The computation record that was replayed
    """
    if loss.shape != ():
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss is not connected to any tracked tensor")
    record = ComputationRecord(loss)
    record.replay(np.ones((), dtype=DTYPE))
    return record
