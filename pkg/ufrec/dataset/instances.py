"""
Prefix expansion of training sequences into (prefix, next item, future items) instances.
"""
from dataclasses import dataclass
from typing import List, Tuple

from dataset.corpus import TrainView
from utils.exceptions import ContractError


@dataclass(frozen=True)
class TrainingInstance:
    """
    prefix = items[:t], next_target = items[t], future_targets = items[t+1 : t+K].

    fs_valid / fc_valid require the full horizon of K items after the prefix
    to lie inside the training sequence.
    """

    user_index: int
    prefix: Tuple[int, ...]
    next_target: int
    future_targets: Tuple[int, ...]
    fs_valid: bool
    fc_valid: bool

    @property
    def horizon_items(self) -> Tuple[int, ...]:
        """v_{t+1} .. v_{t+K} when fc_valid."""
        return (self.next_target,) + self.future_targets


def expand_instances(train: TrainView, horizon: int) -> List[TrainingInstance]:
    """
    Emit n-1 instances for every training sequence of length n.

    Args:
        train: Training view from split_leave_one_out
        horizon: K >= 1

    Returns:
        Instances in user order, t ascending
    """
    if horizon < 1:
        raise ContractError(f"horizon must be >= 1, got {horizon}")
    instances = []
    for user_index, items in zip(train.user_indices, train.sequences):
        n = len(items)
        for t in range(1, n):
            valid = t + horizon <= n
            future = tuple(items[t + 1:t + horizon]) if valid else ()
            instances.append(TrainingInstance(
                user_index=user_index,
                prefix=tuple(items[:t]),
                next_target=items[t],
                future_targets=future,
                fs_valid=valid,
                fc_valid=valid,
            ))
    return instances
