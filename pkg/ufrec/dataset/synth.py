"""
Synthetic corpora from a sparse first-order Markov chain over items.
"""
import numpy as np

from dataset.corpus import InteractionCorpus, build_corpus
from utils.logger import get_logger

logger = get_logger()

PRIMARY_PROB = 0.9
SECONDARY_PROB = 0.1


def markov_transition_table(num_items: int, seed: int) -> np.ndarray:
    """
    [num_items + 1, num_items + 1] row-stochastic table; row/column 0 is padding and stays empty.

    Each item moves to a primary successor (a random permutation, so every
    item is somebody's primary successor) with 0.9 and to a distinct
    secondary successor with 0.1.
    """
    if num_items < 10:
        raise ValueError(f"synth_markov needs num_items >= 10, got {num_items}")
    rng = np.random.default_rng(seed)
    table = np.zeros((num_items + 1, num_items + 1))
    primary = rng.permutation(num_items) + 1
    for item in range(1, num_items + 1):
        first = primary[item - 1]
        second = first
        while second == first:
            second = int(rng.integers(1, num_items + 1))
        table[item, first] = PRIMARY_PROB
        table[item, second] = SECONDARY_PROB
    return table


def sample_chain(table: np.ndarray, length: int, rng: np.random.Generator,
                 noise_rate: float = 0.0, start=None) -> np.ndarray:
    """Walk the chain; with probability noise_rate a step jumps to a uniform random item."""
    num_items = table.shape[0] - 1
    chain = np.empty(length, dtype=np.int64)
    current = int(rng.integers(1, num_items + 1)) if start is None else int(start)
    chain[0] = current
    for step in range(1, length):
        if noise_rate > 0.0 and rng.random() < noise_rate:
            current = int(rng.integers(1, num_items + 1))
        else:
            current = int(rng.choice(num_items + 1, p=table[current]))
        chain[step] = current
    return chain


def synth_markov(num_users: int, num_items: int, seq_len: int, transition_seed: int,
                 noise_rate: float = 0.0, min_core: int = 5) -> InteractionCorpus:
    """
    Deterministic synthetic corpus: one chain of seq_len items per user.

    Args:
        num_users: Number of sequences
        num_items: Catalog size (>= 10)
        seq_len: Items per user
        transition_seed: Seeds both the table and the walks
        noise_rate: Probability of a uniform random jump per step
        min_core: k-core applied to the generated data

    Returns:
        InteractionCorpus
    """
    table = markov_transition_table(num_items, transition_seed)
    rng = np.random.default_rng([transition_seed, 1])
    sequences = [
        (f"u{user}", [str(i) for i in sample_chain(table, seq_len, rng, noise_rate)])
        for user in range(num_users)
    ]
    corpus = build_corpus(sequences, min_core=min_core)
    logger.info(f"Synthesized corpus: {corpus.num_users} users, {corpus.num_items} items, "
                f"noise_rate={noise_rate}")
    return corpus
