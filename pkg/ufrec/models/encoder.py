"""
Base class for sequence encoders the trainer and evaluator accept.

An encoder maps left-padded prefixes to one hidden state per row and owns
the item table M that the output layer is tied to. The training objective
and evaluation only use the members defined here, so another encoder can
be plugged in through UFRecModel's `encoder_factory`.
"""
from typing import Callable, Optional, Tuple

import numpy as np

from config.config_manager import BackboneConfig
from models.base_module import Module
from numcore import ops
from numcore.tensor import Tensor, no_tape


class SequenceEncoder(Module):
    """
    Subclasses set `cfg` and `item_emb` ([V+1, d]) and implement `forward`.
    """

    cfg: BackboneConfig
    item_emb: Tensor

    @property
    def num_items(self) -> int:
        return self.cfg.num_items

    def forward(self, prefixes: np.ndarray, lengths, rng: Optional[np.random.Generator] = None) -> Tensor:
        """Hidden state [N, d] at the most recent position of each prefix."""
        raise NotImplementedError(f"{type(self).__name__} must implement forward")

    def predict(self, h: Tensor) -> Tuple[Tensor, Tensor]:
        """logits = h M^T over V+1 ids (pad included); probs = softmax(logits)."""
        logits = ops.matmul(h, ops.transpose(self.item_emb, (1, 0)))
        return logits, ops.softmax_lastdim(logits)

    def score(self, prefixes: np.ndarray, lengths) -> np.ndarray:
        """Raw logits for ranking; no tape, no dropout."""
        was_training = self.training
        self.eval()
        try:
            with no_tape():
                h = self.forward(prefixes, lengths)
            return h.data @ self.item_emb.data.T
        finally:
            self.train(was_training)


EncoderFactory = Callable[[BackboneConfig, np.random.Generator], SequenceEncoder]
