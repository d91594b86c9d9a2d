"""Parameter initializers."""
import numpy as np

from numcore.tensor import Tensor


def truncated_normal(rng: np.random.Generator, shape, std: float, bound: float = 2.0) -> Tensor:
    """Normal(0, std) resampled until every entry lies within +-bound*std."""
    values = rng.normal(0.0, std, size=shape)
    outside = np.abs(values) > bound * std
    while outside.any():
        values[outside] = rng.normal(0.0, std, size=int(outside.sum()))
        outside = np.abs(values) > bound * std
    return Tensor(values, requires_grad=True)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def ones(shape) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)
