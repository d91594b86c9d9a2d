"""
Adam with bias correction over named numpy parameters.
"""
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from numcore.tensor import Tensor
from utils.exceptions import ContractError


@dataclass
class AdamState:
    """First/second moments per parameter name and the step counter."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_update(params: Mapping[str, np.ndarray], grads: Mapping[str, Optional[np.ndarray]], state: AdamState,
                lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """
    One Adam step, in place on params and state.

    A missing or None gradient counts as zero.

    Raises:
        ContractError: Gradient shape differs from its parameter
    """
    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step

    for name, value in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(value)
        elif g.shape != value.shape:
            raise ContractError(f"gradient for '{name}' has shape {g.shape}, parameter has {value.shape}")

        if name not in state.m:
            state.m[name] = np.zeros_like(value)
            state.v[name] = np.zeros_like(value)

        state.m[name] *= beta1
        state.m[name] += (1.0 - beta1) * g
        state.v[name] *= beta2
        state.v[name] += (1.0 - beta2) * (g * g)

        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        value -= lr * m_hat / (np.sqrt(v_hat) + eps)


def clip_by_global_norm(grads: Dict[str, Optional[np.ndarray]], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm; returns the pre-clip norm."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values() if g is not None)))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for name, g in grads.items():
            if g is not None:
                grads[name] = g * scale
    return total


class Adam:
    """Adam bound to a set of named Tensors."""

    def __init__(self, parameters: Mapping[str, Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, grad_clip: float = 0.0):
        self.parameters = dict(parameters)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.grad_clip = grad_clip
        self.state = AdamState()

    def zero_grad(self) -> None:
        for tensor in self.parameters.values():
            tensor.zero_grad()

    def step(self) -> float:
        """Apply one update from the tensors' .grad; returns the gradient norm before clipping."""
        grads = {name: tensor.grad for name, tensor in self.parameters.items()}
        norm = clip_by_global_norm(grads, self.grad_clip)
        adam_update({name: t.data for name, t in self.parameters.items()}, grads, self.state,
                    self.lr, self.beta1, self.beta2, self.eps)
        return norm
