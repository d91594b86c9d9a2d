"""
Interaction corpus ingestion.
Reads SASRec-style text logs, applies k-core filtering, remaps ids and builds
chronological leave-one-out splits.
"""
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

from utils.exceptions import CorpusParseError, DataError
from utils.logger import get_logger

logger = get_logger()


@dataclass(frozen=True)
class UserRecord:
    """One user's chronological item sequence."""

    user_id: str
    items: Tuple[int, ...]

    def __len__(self):
        return len(self.items)


@dataclass(frozen=True)
class InteractionCorpus:
    """
    Filtered corpus. Item id 0 is padding; real items are [1, num_items].

    item_map / user_map keep raw token -> dense id for reporting.
    """

    users: Tuple[UserRecord, ...]
    num_items: int
    item_map: Dict[str, int] = field(default_factory=dict)
    user_map: Dict[str, int] = field(default_factory=dict)

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def num_actions(self) -> int:
        return sum(len(u) for u in self.users)

    def stats(self) -> "CorpusStats":
        return CorpusStats.of(self.num_users, self.num_items, self.num_actions)


@dataclass(frozen=True)
class CorpusStats:
    """Users / items / actions / average length / density line."""

    users: int
    items: int
    actions: int
    avg_length: float
    density: float

    @classmethod
    def of(cls, users: int, items: int, actions: int) -> "CorpusStats":
        avg = actions / users if users else 0.0
        density = actions / (users * items) if users and items else 0.0
        return cls(users, items, actions, avg, density)

    def format_line(self, name: str = "corpus") -> str:
        return (f"{name}\t#Users {self.users:,}\t#Items {self.items:,}\t#Actions {self.actions:,}"
                f"\tAvg. Length {self.avg_length:.1f}\tDensity {self.density * 100:.2f}%")


@dataclass(frozen=True)
class SplitView:
    """Evaluation instances of one split: context prefix -> held-out target."""

    name: str
    user_indices: Tuple[int, ...]
    contexts: Tuple[Tuple[int, ...], ...]
    targets: Tuple[int, ...]

    def __len__(self):
        return len(self.targets)


@dataclass(frozen=True)
class TrainView:
    """Per-user training sequences (everything before the validation item)."""

    user_indices: Tuple[int, ...]
    sequences: Tuple[Tuple[int, ...], ...]


# ============================
# Loading and filtering
# ============================

def read_raw_sequences(path: Path) -> List[Tuple[str, List[str]]]:
    """
    Parse `user item item ...` lines; repeated user tokens are concatenated.

    Raises:
        DataError: File cannot be read
        CorpusParseError: A non-blank line has fewer than 2 tokens
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read corpus {path}: {e}") from e

    order: List[str] = []
    sequences: Dict[str, List[str]] = {}
    for line_number, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) < 2:
            raise CorpusParseError(f"expected 'user item ...', got {line.strip()!r}", line_number)
        user, items = tokens[0], tokens[1:]
        if user not in sequences:
            order.append(user)
            sequences[user] = []
        sequences[user].extend(items)
    logger.debug(f"Read {len(order)} raw users from {path}")
    return [(user, sequences[user]) for user in order]


def k_core_filter(sequences: Sequence[Tuple[str, Sequence[str]]], min_core: int = 5,
                  fixpoint: bool = True) -> List[Tuple[str, List[str]]]:
    """
    Drop users shorter than min_core and items with fewer than min_core interactions.

    Item support counts interactions, so an item repeated inside one sequence
    counts once per occurrence, not once per sequence.

    With fixpoint=True both passes repeat until nothing changes; otherwise
    users then items are filtered once.
    """
    current = [(user, list(items)) for user, items in sequences]
    rounds = 0
    while True:
        rounds += 1
        before = sum(len(items) for _, items in current)
        current = [(user, items) for user, items in current if len(items) >= min_core]
        counts = Counter(item for _, items in current for item in items)
        current = [(user, [i for i in items if counts[i] >= min_core]) for user, items in current]
        current = [(user, items) for user, items in current if items]
        after = sum(len(items) for _, items in current)
        if not fixpoint or after == before:
            break
    logger.debug(f"k-core({min_core}) filtering finished after {rounds} round(s)")
    return current


def build_corpus(sequences: Sequence[Tuple[str, Sequence[str]]], min_core: int = 5,
                 fixpoint: bool = True) -> InteractionCorpus:
    """Filter raw token sequences and remap items to [1, V] in first-appearance order."""
    filtered = k_core_filter(sequences, min_core, fixpoint)
    if not filtered:
        raise DataError(f"corpus is empty after {min_core}-core filtering")

    item_map: Dict[str, int] = {}
    user_map: Dict[str, int] = {}
    users = []
    for user, items in filtered:
        for item in items:
            if item not in item_map:
                item_map[item] = len(item_map) + 1
        user_map[user] = len(user_map)
        users.append(UserRecord(user, tuple(item_map[i] for i in items)))
    return InteractionCorpus(tuple(users), len(item_map), item_map, user_map)


def load_corpus(path: Path, min_core: int = 5, fixpoint: bool = True) -> InteractionCorpus:
    """
    Load a corpus file and apply k-core filtering.

    Args:
        path: UTF-8 text file, one `user item1 item2 ...` line per user
        min_core: Minimum interactions per user and per item
        fixpoint: Iterate filtering until stable (single pass when False)

    Returns:
        InteractionCorpus with items remapped to [1, V]
    """
    corpus = build_corpus(read_raw_sequences(path), min_core, fixpoint)
    stats = corpus.stats()
    logger.info(f"Loaded corpus {path}: {stats.users} users, {stats.items} items, {stats.actions} actions")
    return corpus


def corpus_from_sequences(sequences: Sequence[Sequence[int]], num_items: int) -> InteractionCorpus:
    """Wrap already-remapped integer sequences without filtering."""
    users = tuple(UserRecord(str(index), tuple(int(i) for i in seq)) for index, seq in enumerate(sequences))
    return InteractionCorpus(users, num_items, {str(i): i for i in range(1, num_items + 1)},
                             {u.user_id: index for index, u in enumerate(users)})


def write_corpus(corpus: InteractionCorpus, path: Path) -> None:
    """Write the corpus back in the input format (raw user tokens, remapped item ids)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for user in corpus.users:
            f.write(f"{user.user_id} {' '.join(str(i) for i in user.items)}\n")
    logger.info(f"Wrote corpus to {path}")


# ============================
# Splits
# ============================

def split_leave_one_out(corpus: InteractionCorpus) -> Tuple[TrainView, SplitView, SplitView]:
    """
    Chronological leave-one-out split.

    Last item -> test (context includes the validation item), penultimate
    item -> validation, everything before -> training sequence.
    """
    train_users, train_seqs = [], []
    valid_ctx, valid_tgt, test_ctx, test_tgt = [], [], [], []
    indices = []
    for index, user in enumerate(corpus.users):
        items = user.items
        if len(items) < 3:
            raise DataError(f"user {user.user_id} has {len(items)} interactions; leave-one-out needs 3")
        indices.append(index)
        train_users.append(index)
        train_seqs.append(items[:-2])
        valid_ctx.append(items[:-2])
        valid_tgt.append(items[-2])
        test_ctx.append(items[:-1])
        test_tgt.append(items[-1])
    train = TrainView(tuple(train_users), tuple(train_seqs))
    valid = SplitView("valid", tuple(indices), tuple(valid_ctx), tuple(valid_tgt))
    test = SplitView("test", tuple(indices), tuple(test_ctx), tuple(test_tgt))
    return train, valid, test
