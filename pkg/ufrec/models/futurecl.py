"""
Future-aware contrastive learning: the projected current state is pulled
toward the mean embedding of its own next K items, against the other rows of
the batch.
"""
from dataclasses import dataclass

import numpy as np

from models.base_module import Module
from numcore import ops
from numcore.init import truncated_normal, zeros
from numcore.tensor import Tensor
from utils.constants import PAD_ID
from utils.exceptions import ContractError, DimensionError
from utils.logger import get_logger

logger = get_logger()


class FutureContrastive(Module):
    """h^z = h W + b, no activation."""

    def __init__(self, hidden_dim: int, rng: np.random.Generator, init_std: float = 0.02):
        super().__init__()
        self.weight = self.register_parameter("weight", truncated_normal(rng, (hidden_dim, hidden_dim), init_std))
        self.bias = self.register_parameter("bias", zeros((hidden_dim,)))

    def project_state(self, h: Tensor) -> Tensor:
        return ops.add(ops.matmul(h, self.weight), self.bias)


def horizon_pool(horizon_items, item_emb: Tensor) -> Tensor:
    """
    z = mean of the embedding rows of v_{t+1} .. v_{t+K}.

    Args:
        horizon_items: int [N, K] (or [K]) item ids, no padding
        item_emb: M [V+1, d]

    Returns:
        [N, d] (or [d])
    """
    ids = np.asarray(horizon_items, dtype=np.int64)
    if ids.size == 0:
        raise ContractError("horizon_pool: empty horizon")
    if np.any(ids == PAD_ID):
        raise ContractError("horizon_pool: padding id inside a future horizon")
    return ops.mean(ops.embedding_lookup(item_emb, ids), axis=-2)


@dataclass(frozen=True)
class ContrastiveStats:
    """Diagnostics of one InfoNCE evaluation."""

    rows: int
    positive_similarity: float
    negative_similarity: float

    @property
    def similarity_gap(self) -> float:
        return self.positive_similarity - self.negative_similarity


def similarity_stats(hz: np.ndarray, z: np.ndarray) -> ContrastiveStats:
    rows = hz.shape[0]
    if rows == 0:
        return ContrastiveStats(0, 0.0, 0.0)
    sims = hz @ z.T
    positive = float(np.trace(sims) / rows)
    negative = float((sims.sum() - np.trace(sims)) / (rows * (rows - 1))) if rows > 1 else 0.0
    return ContrastiveStats(rows, positive, negative)


def infonce(hz: Tensor, z: Tensor, fc_valid, temperature: float = 1.0) -> Tensor:
    """
    In-batch InfoNCE over the fc_valid rows.

    loss_i = -log( exp(hz_i . z_i) / sum_j exp(hz_i . z_j) ), the denominator
    including the positive; L_FC = mean_i loss_i.

    Args:
        hz: [N, d] projected states
        z: [N, d] horizon anchors (rows where fc_valid is False are ignored)
        fc_valid: bool [N]
        temperature: Divides the similarities (1.0 = raw dot products)

    Returns:
        Scalar Tensor; 0 with a warning when fewer than 2 rows are valid
    """
    fc_valid = np.asarray(fc_valid, dtype=bool)
    if hz.shape != z.shape or hz.shape[0] != fc_valid.shape[0]:
        raise DimensionError(f"infonce: hz {hz.shape}, z {z.shape}, mask {fc_valid.shape}")
    valid = np.flatnonzero(fc_valid)
    if valid.size < 2:
        logger.warning(f"InfoNCE skipped: {valid.size} fc_valid row(s) in batch, need at least 2")
        return Tensor(0.0)
    if valid.size < fc_valid.size:
        hz = ops.gather_rows(hz, valid)
        z = ops.gather_rows(z, valid)
    sims = ops.matmul(hz, ops.transpose(z, (1, 0)))
    if temperature != 1.0:
        sims = ops.scalar_mul(sims, 1.0 / temperature)
    log_probs = ops.log_softmax_lastdim(sims)
    positives = ops.pick_lastdim(log_probs, np.arange(valid.size))
    return ops.scalar_mul(ops.mean(positives), -1.0)
