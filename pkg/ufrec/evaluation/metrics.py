"""
Leave-one-out ranking metrics over the full catalog.
Ranks are 1-based; ties are broken by ascending item id.
"""
import math
from typing import List, Sequence

import numpy as np

from utils.constants import PAD_ID
from utils.exceptions import ContractError


def hit_rate(rank: int, m: int) -> int:
    """1 iff the target is within the top m."""
    if rank < 1:
        raise ContractError(f"rank must be >= 1, got {rank}")
    return int(rank <= m)


def ndcg_at(rank: int, m: int) -> float:
    """1 / log2(rank + 1) within the top m, else 0 (one relevant item, IDCG = 1)."""
    if rank < 1:
        raise ContractError(f"rank must be >= 1, got {rank}")
    return 1.0 / math.log2(rank + 1) if rank <= m else 0.0


def target_ranks(scores: np.ndarray, targets: Sequence[int]) -> np.ndarray:
    """
    Rank of each row's target among items 1..V.

    Args:
        scores: [N, V+1] logits, column 0 is padding and never ranked
        targets: [N] ids in [1, V]

    Returns:
        int64 [N] ranks, 1 = best
    """
    scores = np.atleast_2d(scores)
    targets = np.asarray(targets, dtype=np.int64)
    if np.any(targets == PAD_ID):
        raise ContractError("padding id cannot be a ranking target")
    candidates = scores[:, 1:]
    item_ids = np.arange(1, scores.shape[1])
    target_scores = scores[np.arange(len(targets)), targets][:, None]
    greater = (candidates > target_scores).sum(axis=1)
    tied_before = ((candidates == target_scores) & (item_ids[None, :] < targets[:, None])).sum(axis=1)
    return (1 + greater + tied_before).astype(np.int64)


def rank_items(scores: np.ndarray) -> np.ndarray:
    """Item ids 1..V sorted by descending score, ascending id on ties."""
    scores = np.asarray(scores)
    item_ids = np.arange(1, scores.shape[-1])
    return item_ids[np.lexsort((item_ids, -scores[1:]))]


def mean_metrics(ranks: Sequence[int], cutoffs: Sequence[int]) -> List[dict]:
    """Per-cutoff means of HR and NDCG (sum then divide)."""
    ranks = list(ranks)
    out = []
    for m in cutoffs:
        hits = sum(hit_rate(r, m) for r in ranks)
        gains = sum(ndcg_at(r, m) for r in ranks)
        count = max(len(ranks), 1)
        out.append({"m": m, "hr": hits / count, "ndcg": gains / count})
    return out
