"""
Dense tensor with reverse-mode automatic differentiation.

Operations record themselves on the active Tape when at least one input
requires a gradient. Outside a Tape nothing is recorded, which is how
inference runs.
"""
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from utils.exceptions import ContractError

_state = threading.local()


def _tape_stack() -> List["Tape"]:
    if not hasattr(_state, "stack"):
        _state.stack = []
    return _state.stack


def current_tape() -> Optional["Tape"]:
    """Innermost active Tape of this thread, or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


@contextmanager
def no_tape():
    """Suspend recording inside the block, even under an active Tape."""
    stack = _tape_stack()
    stack.append(None)
    try:
        yield
    finally:
        stack.pop()


class Tensor:
    """Float64 array that can take part in a recorded computation."""

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._tape: Optional["Tape"] = None
        self._is_leaf = True

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # ----------------------------
    # Properties
    # ----------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._is_leaf

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        from numcore.ops import detach
        return detach(self)

    # ----------------------------
    # Operators
    # ----------------------------

    def __add__(self, other):
        from numcore.ops import add
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from numcore.ops import sub
        return sub(self, other)

    def __rsub__(self, other):
        from numcore.ops import sub
        return sub(other, self)

    def __mul__(self, other):
        from numcore.ops import mul
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from numcore.ops import scalar_mul
        return scalar_mul(self, -1.0)

    def __truediv__(self, scalar):
        from numcore.ops import scalar_mul
        if isinstance(scalar, Tensor):
            raise ContractError("tensor division is only defined for scalar divisors")
        return scalar_mul(self, 1.0 / float(scalar))

    def __matmul__(self, other):
        from numcore.ops import matmul
        return matmul(self, other)


def as_tensor(value) -> Tensor:
    """Wrap a constant; Tensors pass through unchanged."""
    return value if isinstance(value, Tensor) else Tensor(value)


@dataclass
class Node:
    """One recorded operation."""

    name: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tape:
    """
    Ordered record of operations for one forward pass.

    Usage:
        with Tape() as tape:
            loss = model(batch)
        tape.backward(loss)
    """

    def __init__(self):
        self.nodes: List[Node] = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, name: str, inputs: Sequence[Tensor], output: Tensor,
               backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> None:
        output.requires_grad = True
        output._tape = self
        output._is_leaf = False
        self.nodes.append(Node(name, tuple(inputs), output, backward_fn))

    def backward(self, loss: Tensor) -> None:
        """
        Propagate d loss / d x to every requires_grad tensor reachable from loss.

        Leaves accumulate into .grad across calls; intermediate tensors get
        their cotangent of this call written to .grad.

        Raises:
            ContractError: loss is not a scalar or was not recorded on this tape
        """
        if loss.data.size != 1 or loss.data.ndim > 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._tape is not self:
            raise ContractError("loss was not produced under this tape")

        cotangents = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = cotangents.pop(id(node.output), None)
            if g is None:
                continue
            node.output.grad = g
            input_grads = node.backward_fn(g)
            for tensor, tensor_grad in zip(node.inputs, input_grads):
                if tensor_grad is None or not tensor.requires_grad:
                    continue
                if tensor.is_leaf:
                    tensor.grad = tensor_grad.copy() if tensor.grad is None else tensor.grad + tensor_grad
                else:
                    previous = cotangents.get(id(tensor))
                    cotangents[id(tensor)] = tensor_grad if previous is None else previous + tensor_grad


def backward(loss: Tensor) -> None:
    """Run backward on the tape that produced loss."""
    if loss.data.size != 1 or loss.data.ndim > 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._tape is None:
        raise ContractError("loss was not produced under an active Tape")
    loss._tape.backward(loss)
