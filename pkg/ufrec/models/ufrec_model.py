"""
Training-time composite: the sequence encoder plus the auxiliary heads it needs.

Only `backbone` takes part in inference; the heads exist for training.
"""
from typing import Optional

import numpy as np

from config.config_manager import RunConfig
from models.backbone import Backbone
from models.base_module import Module
from models.encoder import EncoderFactory, SequenceEncoder
from models.futurecl import FutureContrastive
from models.futuresup import FutureSupervision


class UFRecModel(Module):
    """Encoder with optional future-supervision and contrastive heads."""

    def __init__(self, run_cfg: RunConfig, rng: np.random.Generator,
                 encoder_factory: EncoderFactory = Backbone):
        super().__init__()
        b = run_cfg.backbone
        encoder = encoder_factory(b, rng)
        if not isinstance(encoder, SequenceEncoder):
            raise TypeError(f"encoder_factory must build a SequenceEncoder, got {type(encoder).__name__}")
        self.backbone: SequenceEncoder = self.register_module("backbone", encoder)
        self.future_sup: Optional[FutureSupervision] = None
        self.contrastive: Optional[FutureContrastive] = None
        if run_cfg.future_sup.horizon >= 2:
            self.future_sup = self.register_module(
                "future_sup", FutureSupervision(b.hidden_dim, run_cfg.future_sup.horizon, rng, b.init_std))
        self.contrastive = self.register_module(
            "contrastive", FutureContrastive(b.hidden_dim, rng, b.init_std))

    def auxiliary_parameter_names(self):
        return [name for name in self.parameters() if not name.startswith("backbone.")]
