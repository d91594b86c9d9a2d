"""
Batch assembly: truncation to the last max_len items, left padding, target matrices and masks.
"""
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from dataset.instances import TrainingInstance
from utils.constants import PAD_ID
from utils.exceptions import ConfigError


@dataclass(frozen=True)
class Batch:
    """
    prefixes: int64 [N, max_len], left padded with PAD_ID.
    future_targets: int64 [N, K-1], PAD_ID on rows where fs_valid is False.
    """

    batch_id: int
    prefixes: np.ndarray
    lengths: np.ndarray
    next_targets: np.ndarray
    future_targets: np.ndarray
    fs_valid: np.ndarray
    fc_valid: np.ndarray

    def __len__(self):
        return int(self.prefixes.shape[0])

    @property
    def horizon_items(self) -> np.ndarray:
        """[N, K] ids v_{t+1}..v_{t+K}; meaningful on fc_valid rows only."""
        return np.concatenate([self.next_targets[:, None], self.future_targets], axis=1)


def pad_left(prefix: Sequence[int], max_len: int) -> np.ndarray:
    """Keep the last max_len items and left-pad with PAD_ID."""
    kept = list(prefix)[-max_len:]
    row = np.full(max_len, PAD_ID, dtype=np.int64)
    if kept:
        row[max_len - len(kept):] = kept
    return row


def pad_prefixes(prefixes: Sequence[Sequence[int]], max_len: int) -> np.ndarray:
    if not prefixes:
        return np.zeros((0, max_len), dtype=np.int64)
    return np.stack([pad_left(p, max_len) for p in prefixes])


def strip_padding(row: np.ndarray) -> list:
    """Inverse of pad_left for rows whose items are all real."""
    return [int(i) for i in row if i != PAD_ID]


def collate(instances: Sequence[TrainingInstance], max_len: int, horizon: int, batch_id: int = 0) -> Batch:
    width = max(horizon - 1, 0)
    future = np.full((len(instances), width), PAD_ID, dtype=np.int64)
    for row, inst in enumerate(instances):
        if inst.fs_valid and width:
            future[row] = inst.future_targets
    return Batch(
        batch_id=batch_id,
        prefixes=pad_prefixes([inst.prefix for inst in instances], max_len),
        lengths=np.array([min(len(inst.prefix), max_len) for inst in instances], dtype=np.int64),
        next_targets=np.array([inst.next_target for inst in instances], dtype=np.int64),
        future_targets=future,
        fs_valid=np.array([inst.fs_valid for inst in instances], dtype=bool),
        fc_valid=np.array([inst.fc_valid for inst in instances], dtype=bool),
    )


def make_batches(instances: Sequence[TrainingInstance], batch_size: int = 256, max_len: int = 50,
                 shuffle_seed: Optional[int] = None, horizon: Optional[int] = None) -> Iterator[Batch]:
    """
    Yield batches in a seeded shuffled order; the final short batch is kept.

    Args:
        instances: Output of expand_instances
        batch_size: Rows per batch, >= 2 so InfoNCE has a negative
        max_len: Prefix window
        shuffle_seed: None keeps input order
        horizon: K; inferred from the first fs_valid instance when omitted

    Raises:
        ConfigError: batch_size < 2
    """
    if batch_size < 2:
        raise ConfigError(f"batch_size must be >= 2, got {batch_size}")
    if horizon is None:
        horizon = next((len(inst.future_targets) + 1 for inst in instances if inst.fs_valid), 1)
    order = np.arange(len(instances))
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(instances))
    for batch_id, start in enumerate(range(0, len(order), batch_size)):
        chunk = [instances[i] for i in order[start:start + batch_size]]
        yield collate(chunk, max_len, horizon, batch_id)
