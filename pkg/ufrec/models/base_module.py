"""
Base Module class.
All parameterized components inherit from this class for parameter bookkeeping.
"""
from collections import OrderedDict
from typing import Dict, Mapping

import numpy as np

from numcore.tensor import Tensor
from utils.exceptions import CheckpointError
from utils.logger import get_logger

logger = get_logger()


class Module:
    """Base class for all parameterized components."""

    def __init__(self):
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        self._children: "OrderedDict[str, Module]" = OrderedDict()
        self.training = True

    def register_parameter(self, name: str, tensor: Tensor) -> Tensor:
        tensor.requires_grad = True
        self._params[name] = tensor
        return tensor

    def register_module(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def parameters(self) -> Dict[str, Tensor]:
        """
        Named parameters, children prefixed with "<child>.".

        Returns:
            Ordered name -> Tensor mapping
        """
        named = OrderedDict(self._params)
        for child_name, child in self._children.items():
            for name, tensor in child.parameters().items():
                named[f"{child_name}.{name}"] = tensor
        return named

    def zero_grad(self):
        for tensor in self.parameters().values():
            tensor.zero_grad()

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for child in self._children.values():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self.parameters().items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray], strict: bool = True):
        """
        Copy arrays into parameters.

        Args:
            state: name -> array
            strict: Raise when a parameter is missing from state

        Raises:
            CheckpointError: Missing name (strict) or shape mismatch
        """
        for name, tensor in self.parameters().items():
            if name not in state:
                if strict:
                    raise CheckpointError(f"checkpoint is missing parameter '{name}'")
                continue
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != tensor.shape:
                raise CheckpointError(
                    f"parameter '{name}' has shape {value.shape} in checkpoint, model expects {tensor.shape}"
                )
            tensor.data = value.copy()
        logger.debug(f"Loaded {len(state)} arrays into {type(self).__name__}")

    def num_parameters(self) -> int:
        return int(sum(t.size for t in self.parameters().values()))
