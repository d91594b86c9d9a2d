"""
Inference (top-N recommendation) and split evaluation.

Only a sequence encoder is accepted here: the auxiliary heads never take part
in inference.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from dataset.batching import pad_prefixes
from dataset.corpus import CorpusStats, SplitView
from evaluation.metrics import mean_metrics, rank_items, target_ranks
from models.encoder import SequenceEncoder
from utils.constants import EVAL_CUTOFFS, LENGTH_GROUPS
from utils.exceptions import ContractError
from utils.logger import get_logger

logger = get_logger()


@dataclass
class EvalReport:
    """HR@m / NDCG@m over one split."""

    split: str
    hr: Dict[int, float]
    ndcg: Dict[int, float]
    num_evaluated: int
    ranks: Optional[np.ndarray] = field(default=None, repr=False)

    def metric(self, name: str) -> float:
        """Look up "hr@10", "ndcg@20", ..."""
        kind, _, cutoff = name.partition("@")
        table = {"hr": self.hr, "ndcg": self.ndcg}.get(kind.lower())
        if table is None or not cutoff.isdigit() or int(cutoff) not in table:
            raise ContractError(f"unknown metric {name!r}")
        return table[int(cutoff)]

    def validate(self) -> None:
        """Range and monotonicity checks; raises ContractError on violation."""
        cutoffs = sorted(self.hr)
        for m in cutoffs:
            if not (0.0 <= self.ndcg[m] <= self.hr[m] <= 1.0):
                raise ContractError(f"{self.split}: expected 0 <= ndcg@{m} <= hr@{m} <= 1")
        for low, high in zip(cutoffs, cutoffs[1:]):
            if self.hr[high] < self.hr[low] or self.ndcg[high] < self.ndcg[low]:
                raise ContractError(f"{self.split}: metrics must not decrease from @{low} to @{high}")

    def format_table(self) -> str:
        header = f"{'split':<8}" + "".join(f"{f'HR@{m}':>10}{f'NDCG@{m}':>10}" for m in sorted(self.hr))
        row = f"{self.split:<8}" + "".join(f"{self.hr[m]:>10.4f}{self.ndcg[m]:>10.4f}" for m in sorted(self.hr))
        return f"{header}\n{row}\n({self.num_evaluated} users)"

    def to_lines(self, seed: Optional[int] = None) -> List[str]:
        """Machine-readable `metric<TAB>m<TAB>value<TAB>split<TAB>seed` lines."""
        seed_text = "" if seed is None else str(seed)
        lines = []
        for m in sorted(self.hr):
            lines.append(f"hr\t{m}\t{self.hr[m]!r}\t{self.split}\t{seed_text}")
            lines.append(f"ndcg\t{m}\t{self.ndcg[m]!r}\t{self.split}\t{seed_text}")
        return lines


def infer_topn(history: Sequence[int], backbone: SequenceEncoder, n: int) -> List[int]:
    """
    Top-n items for one user history.

    Raises:
        ContractError: Empty history
    """
    if len(history) == 0:
        raise ContractError("infer_topn needs a non-empty history")
    max_len = backbone.cfg.max_len
    prefixes = pad_prefixes([history], max_len)
    scores = backbone.score(prefixes, [min(len(history), max_len)])[0]
    return [int(i) for i in rank_items(scores)[:n]]


def score_contexts(contexts: Sequence[Sequence[int]], backbone: SequenceEncoder, batch_size: int = 512):
    """Yield (row offset, [B, V+1] score matrix) over contexts."""
    max_len = backbone.cfg.max_len
    for start in range(0, len(contexts), batch_size):
        chunk = contexts[start:start + batch_size]
        lengths = [min(len(c), max_len) for c in chunk]
        yield start, backbone.score(pad_prefixes(chunk, max_len), lengths)


def evaluate(view: SplitView, backbone: SequenceEncoder, batch_size: int = 512,
             cutoffs: Sequence[int] = EVAL_CUTOFFS, keep_ranks: bool = True) -> EvalReport:
    """
    Rank each target against all V items; no negative sampling, no history filtering.

    Args:
        view: Validation or test view from split_leave_one_out
        backbone: Trained encoder (auxiliary heads are not accepted)
        batch_size: Users scored per forward pass
        cutoffs: m values to report

    Returns:
        EvalReport (validated)
    """
    if not isinstance(backbone, SequenceEncoder):
        raise ContractError(f"evaluate takes a SequenceEncoder, got {type(backbone).__name__}")
    ranks = np.zeros(len(view), dtype=np.int64)
    targets = np.asarray(view.targets, dtype=np.int64)
    for start, scores in score_contexts(view.contexts, backbone, batch_size):
        stop = start + scores.shape[0]
        ranks[start:stop] = target_ranks(scores, targets[start:stop])
    report = report_from_ranks(view.name, ranks, cutoffs, keep_ranks)
    logger.debug(f"Evaluated {view.name}: " + ", ".join(f"HR@{m}={report.hr[m]:.4f}" for m in cutoffs))
    return report


def report_from_ranks(split: str, ranks: np.ndarray, cutoffs: Sequence[int] = EVAL_CUTOFFS,
                      keep_ranks: bool = True) -> EvalReport:
    values = mean_metrics(ranks, cutoffs)
    report = EvalReport(
        split=split,
        hr={v["m"]: v["hr"] for v in values},
        ndcg={v["m"]: v["ndcg"] for v in values},
        num_evaluated=int(len(ranks)),
        ranks=np.asarray(ranks) if keep_ranks else None,
    )
    report.validate()
    return report


@dataclass
class LengthGroupReport:
    """Metrics and data statistics of one user-length group."""

    label: str
    stats: CorpusStats
    report: EvalReport


def _group_label(bounds: Tuple[int, Optional[int]]) -> str:
    low, high = bounds
    if high is None:
        return f">{low - 1}"
    return f"={low}" if low == high else f"{low}-{high}"


def evaluate_by_length_group(view: SplitView, backbone: SequenceEncoder, sequence_lengths: Sequence[int],
                             full_sequences: Sequence[Sequence[int]],
                             groups=LENGTH_GROUPS, batch_size: int = 512) -> List[LengthGroupReport]:
    """
    Split users by full history length and report each group separately.

    Args:
        view: Split to evaluate
        backbone: Trained backbone
        sequence_lengths: |S_u| per user index
        full_sequences: S_u per user index, for the group statistics
        groups: Inclusive (low, high) bounds, high None = unbounded

    Returns:
        One LengthGroupReport per non-empty group
    """
    full = evaluate(view, backbone, batch_size)
    out = []
    for bounds in groups:
        low, high = bounds
        members = [row for row, user in enumerate(view.user_indices)
                   if sequence_lengths[user] >= low and (high is None or sequence_lengths[user] <= high)]
        if not members:
            continue
        users = [view.user_indices[row] for row in members]
        items = {item for user in users for item in full_sequences[user]}
        actions = sum(len(full_sequences[user]) for user in users)
        stats = CorpusStats.of(len(users), len(items), actions)
        report = report_from_ranks(f"{view.name}{_group_label(bounds)}", full.ranks[members])
        out.append(LengthGroupReport(_group_label(bounds), stats, report))
    return out
