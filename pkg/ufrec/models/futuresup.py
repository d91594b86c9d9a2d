"""
Uncertainty-guided future supervision.

Step-specific projectors map the current state h to K-1 future states that
are scored against the tied item matrix. Each sample's multi-step loss is
scaled by omega = exp(-H(y_hat) / tau), computed from the main prediction and
detached from the graph.
"""
from typing import Union

import numpy as np

from models.base_module import Module
from numcore import ops
from numcore.init import truncated_normal, zeros
from numcore.tensor import Tensor
from utils.constants import ENTROPY_EPS, PAD_ID, ROW_SUM_TOLERANCE
from utils.exceptions import ContractError, DimensionError


class FutureSupervision(Module):
    """phi_k(h) = ReLU(h W_k + b_k) for k = 2..K, stored as one stacked tensor."""

    def __init__(self, hidden_dim: int, horizon: int, rng: np.random.Generator, init_std: float = 0.02):
        super().__init__()
        if horizon < 2:
            raise ContractError(f"future supervision needs horizon >= 2, got {horizon}")
        self.horizon = horizon
        steps = horizon - 1
        self.weight = self.register_parameter(
            "weight", truncated_normal(rng, (steps, hidden_dim, hidden_dim), init_std))
        self.bias = self.register_parameter("bias", zeros((steps, 1, hidden_dim)))

    @property
    def steps(self) -> int:
        return self.horizon - 1

    def project_future(self, h: Tensor) -> Tensor:
        """All K-1 projections in one batched matmul: [N, d] -> [N, K-1, d]."""
        n, d = h.shape
        stacked = ops.matmul(ops.reshape(h, (1, n, d)), self.weight)
        projected = ops.relu(ops.add(stacked, self.bias))
        return ops.transpose(projected, (1, 0, 2))

    def project_future_sequential(self, h: Tensor) -> Tensor:
        """Step-by-step reference for project_future."""
        n, d = h.shape
        rows = []
        for step in range(self.steps):
            w_k = ops.select(self.weight, step, axis=0)
            b_k = ops.select(self.bias, step, axis=0)
            rows.append(ops.relu(ops.add(ops.matmul(h, w_k), b_k)))
        return ops.transpose(ops.reshape(ops.concat_rows(rows), (self.steps, n, d)), (1, 0, 2))

    def future_logits(self, h: Tensor, item_emb: Tensor) -> Tensor:
        """[N, K-1, V+1] scores of every step-specific state against M."""
        return ops.matmul(self.project_future(h), ops.transpose(item_emb, (1, 0)))


def entropy(probs: Tensor) -> Tensor:
    """
    Shannon entropy (natural log) of each row.

    Args:
        probs: [N, V+1] rows summing to 1

    Returns:
        [N] entropies in [0, ln(V+1)]

    Raises:
        ContractError: A row sum is off by more than 1e-4
    """
    row_sums = probs.data.sum(axis=-1)
    if np.any(np.abs(row_sums - 1.0) > ROW_SUM_TOLERANCE):
        raise ContractError(f"entropy: rows must be probability vectors, got sums {row_sums}")
    return ops.scalar_mul(ops.sum(ops.p_log_p(probs, ENTROPY_EPS), axis=-1), -1.0)


def confidence_weight(ent: Tensor, tau: float, detach: bool = True) -> Tensor:
    """omega = exp(-H / tau), in (0, 1]; detached unless detach=False."""
    if tau <= 0:
        raise ContractError(f"tau must be > 0, got {tau}")
    omega = ops.exp(ops.scalar_mul(ent, -1.0 / tau))
    return ops.detach(omega) if detach else omega


def step_cross_entropy(future_logits: Tensor, future_targets) -> Tensor:
    """[N, K-1] cross-entropy of each step against its target."""
    return ops.scalar_mul(
        ops.pick_lastdim(ops.log_softmax_lastdim(future_logits), np.asarray(future_targets, dtype=np.int64)),
        -1.0,
    )


def future_loss(future_logits: Tensor, future_targets, fs_valid, omega: Union[Tensor, np.ndarray, float],
                reduction: str = "valid_mean") -> Tensor:
    """
    L_FS = reduce over fs_valid samples of omega * mean_k CE_k.

    Args:
        future_logits: [N, K-1, V+1]
        future_targets: int [N, K-1]; PAD_ID allowed only on invalid rows
        fs_valid: bool [N]
        omega: [N] weights (a Tensor from confidence_weight, an array, or a constant)
        reduction: "valid_mean" divides by the valid count, "batch_mean" by N

    Returns:
        Scalar Tensor; exactly 0 (no graph) when no row is valid
    """
    future_targets = np.asarray(future_targets, dtype=np.int64)
    fs_valid = np.asarray(fs_valid, dtype=bool)
    n = fs_valid.shape[0]
    if future_logits.shape[:2] != future_targets.shape or future_targets.shape[0] != n:
        raise DimensionError(
            f"future_loss: logits {future_logits.shape}, targets {future_targets.shape}, mask {fs_valid.shape}")
    valid = np.flatnonzero(fs_valid)
    if valid.size == 0:
        return Tensor(0.0)
    if np.any(future_targets[valid] == PAD_ID):
        raise ContractError("future_loss: padding id used as a target on an fs_valid row")

    ce = step_cross_entropy(ops.gather_rows(future_logits, valid), future_targets[valid])
    per_sample = ops.mean_lastdim(ce)
    if isinstance(omega, Tensor):
        weights = ops.gather_rows(omega, valid)
    else:
        weights = np.broadcast_to(np.asarray(omega, dtype=np.float64), (n,))[valid]
    total = ops.sum(ops.mul(per_sample, weights))
    denominator = valid.size if reduction == "valid_mean" else n
    return ops.scalar_mul(total, 1.0 / denominator)
