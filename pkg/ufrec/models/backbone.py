"""
Transformer sequence encoder with a tied item-embedding output layer.

Prefixes arrive left padded to a fixed window, so the last position always
holds the most recent item and is the readout position.
"""
import math
from typing import List, Optional

import numpy as np

from config.config_manager import BackboneConfig
from models.base_module import Module
from models.encoder import SequenceEncoder
from numcore import ops
from numcore.init import ones, truncated_normal, zeros
from numcore.tensor import Tensor
from utils.constants import MASK_VALUE, PAD_ID
from utils.exceptions import ContractError
from utils.logger import get_logger

logger = get_logger()


def attention_mask(lengths: np.ndarray, window: int) -> np.ndarray:
    """
    Additive mask [N, 1, T, T].

    Causal, and real query positions never see pad keys. A pad query sees
    only itself so that no softmax row is empty.
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    positions = np.arange(window)
    causal = positions[None, :] <= positions[:, None]
    first_real = window - lengths
    real_key = positions[None, None, :] >= first_real[:, None, None]
    diagonal = np.eye(window, dtype=bool)[None]
    allowed = causal[None] & (real_key | diagonal)
    return np.where(allowed, 0.0, MASK_VALUE)[:, None, :, :]


class TransformerBlock(Module):
    """Post-LN block: attention -> add -> LN -> FFN(ReLU) -> add -> LN."""

    def __init__(self, cfg: BackboneConfig, rng: np.random.Generator):
        super().__init__()
        d, std = cfg.hidden_dim, cfg.init_std
        d_ff = cfg.ffn_multiplier * d
        self.num_heads = cfg.num_heads
        self.dropout_rate = cfg.dropout_rate
        self.eps = cfg.layer_norm_eps
        self.w_q = self.register_parameter("w_q", truncated_normal(rng, (d, d), std))
        self.w_k = self.register_parameter("w_k", truncated_normal(rng, (d, d), std))
        self.w_v = self.register_parameter("w_v", truncated_normal(rng, (d, d), std))
        self.w_o = self.register_parameter("w_o", truncated_normal(rng, (d, d), std))
        self.ln1_gain = self.register_parameter("ln1_gain", ones((d,)))
        self.ln1_bias = self.register_parameter("ln1_bias", zeros((d,)))
        self.ffn_w1 = self.register_parameter("ffn_w1", truncated_normal(rng, (d, d_ff), std))
        self.ffn_b1 = self.register_parameter("ffn_b1", zeros((d_ff,)))
        self.ffn_w2 = self.register_parameter("ffn_w2", truncated_normal(rng, (d_ff, d), std))
        self.ffn_b2 = self.register_parameter("ffn_b2", zeros((d,)))
        self.ln2_gain = self.register_parameter("ln2_gain", ones((d,)))
        self.ln2_bias = self.register_parameter("ln2_bias", zeros((d,)))
        self.last_attention: Optional[np.ndarray] = None

    def _split_heads(self, x: Tensor) -> Tensor:
        n, t, d = x.shape
        return ops.transpose(ops.reshape(x, (n, t, self.num_heads, d // self.num_heads)), (0, 2, 1, 3))

    def forward(self, x: Tensor, mask: np.ndarray, rng: Optional[np.random.Generator]) -> Tensor:
        n, t, d = x.shape
        q = self._split_heads(ops.matmul(x, self.w_q))
        k = self._split_heads(ops.matmul(x, self.w_k))
        v = self._split_heads(ops.matmul(x, self.w_v))
        scores = ops.scalar_mul(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(d // self.num_heads))
        weights = ops.softmax_lastdim(ops.add(scores, mask))
        self.last_attention = weights.data
        weights = ops.dropout(weights, self.dropout_rate, self.training, rng)
        context = ops.reshape(ops.transpose(ops.matmul(weights, v), (0, 2, 1, 3)), (n, t, d))
        x = ops.layer_norm(ops.add(x, ops.matmul(context, self.w_o)), self.ln1_gain, self.ln1_bias, self.eps)

        hidden = ops.relu(ops.add(ops.matmul(x, self.ffn_w1), self.ffn_b1))
        ffn = ops.add(ops.matmul(hidden, self.ffn_w2), self.ffn_b2)
        ffn = ops.dropout(ffn, self.dropout_rate, self.training, rng)
        return ops.layer_norm(ops.add(x, ffn), self.ln2_gain, self.ln2_bias, self.eps)


class Backbone(SequenceEncoder):
    """Item/position embeddings, L Transformer blocks, tied scoring against M."""

    def __init__(self, cfg: BackboneConfig, rng: np.random.Generator):
        super().__init__()
        if cfg.num_items < 1:
            raise ContractError(f"backbone needs num_items >= 1, got {cfg.num_items}")
        self.cfg = cfg
        d = cfg.hidden_dim
        self.item_emb = self.register_parameter(
            "item_emb", truncated_normal(rng, (cfg.num_items + 1, d), cfg.init_std))
        self.pos_emb = self.register_parameter(
            "pos_emb", truncated_normal(rng, (cfg.max_len, d), cfg.init_std))
        self.blocks: List[TransformerBlock] = [
            self.register_module(f"block{layer}", TransformerBlock(cfg, rng))
            for layer in range(cfg.num_layers)
        ]
        logger.debug(f"Backbone initialized: d={d}, L={cfg.num_layers}, V={cfg.num_items}, "
                     f"{self.num_parameters()} parameters")

    def embed(self, prefixes: np.ndarray) -> Tensor:
        """H = gather(M, ids) + P[0..T]; prefixes is [N, T] or [T]."""
        prefixes = np.atleast_2d(np.asarray(prefixes, dtype=np.int64))
        window = prefixes.shape[1]
        if window > self.cfg.max_len:
            raise ContractError(f"prefix window {window} exceeds max_len {self.cfg.max_len}")
        items = ops.embedding_lookup(self.item_emb, prefixes)
        positions = ops.embedding_lookup(self.pos_emb, np.arange(window))
        return ops.add(items, positions)

    def encode(self, hidden: Tensor, lengths, rng: Optional[np.random.Generator] = None) -> Tensor:
        """
        Run the blocks and read out the last position.

        Args:
            hidden: Embedded input [N, T, d]
            lengths: True (truncated) prefix lengths, [N]
            rng: Dropout generator, required in training mode when dropout > 0

        Returns:
            h: [N, d]
        """
        lengths = np.atleast_1d(np.asarray(lengths, dtype=np.int64))
        window = hidden.shape[1]
        if window < 1:
            raise ContractError("encode needs at least one position")
        if np.any(lengths < 1):
            raise ContractError("every prefix needs at least one real item")
        mask = attention_mask(np.minimum(lengths, window), window)
        for block in self.blocks:
            hidden = block.forward(hidden, mask, rng)
        return ops.select(hidden, window - 1, axis=1)

    def forward(self, prefixes: np.ndarray, lengths, rng: Optional[np.random.Generator] = None) -> Tensor:
        return self.encode(self.embed(prefixes), lengths, rng)


def main_loss(logits: Tensor, next_targets) -> Tensor:
    """Mean over the batch of -log softmax(logits)[target]."""
    next_targets = np.atleast_1d(np.asarray(next_targets, dtype=np.int64))
    if np.any(next_targets == PAD_ID):
        raise ContractError("main_loss: padding id used as a target")
    log_probs = ops.log_softmax_lastdim(logits)
    return ops.scalar_mul(ops.mean(ops.pick_lastdim(log_probs, next_targets)), -1.0)
