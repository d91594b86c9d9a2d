"""
Tests for corpus loading, k-core filtering, splits, prefix expansion, batching and synthetic data.
"""
from collections import Counter

import numpy as np
import pytest

from config.config_manager import config
from dataset.batching import make_batches, pad_left, pad_prefixes, strip_padding
from dataset.corpus import (
    CorpusStats,
    build_corpus,
    k_core_filter,
    load_corpus,
    read_raw_sequences,
    split_leave_one_out,
    write_corpus,
)
from dataset.instances import expand_instances
from dataset.synth import markov_transition_table, sample_chain, synth_markov
from utils.constants import PAD_ID
from utils.exceptions import ConfigError, ContractError, CorpusParseError, DataError
from utils.helpers import load_reference_data, validate_reference_data
from utils.logger import get_logger

logger = get_logger()

SAMPLE_CORPUS = config.root_dir / "data" / "sample_interactions.txt"

# Load reference data once at module level
REFERENCE = load_reference_data()


def brute_force_k_core(sequences, k):
    """Drop every offending user and item at once until nothing offends."""
    current = {user: list(items) for user, items in sequences}
    while True:
        item_counts = Counter(i for items in current.values() for i in items)
        bad_users = {u for u, items in current.items() if len(items) < k}
        bad_items = {i for i, c in item_counts.items() if c < k}
        if not bad_users and not bad_items:
            return current
        current = {u: [i for i in items if i not in bad_items]
                   for u, items in current.items() if u not in bad_users}
        current = {u: items for u, items in current.items() if items}


def random_raw_corpus(rng, max_users=20):
    users = int(rng.integers(1, max_users + 1))
    return [(f"u{u}", [f"i{int(i)}" for i in rng.integers(0, 12, size=int(rng.integers(1, 13)))])
            for u in range(users)]


# ============================
# Loading
# ============================

@pytest.mark.smoke
def test_sample_corpus_loads_with_expected_filtering(reference_data):
    expected = reference_data["sample_corpus"]
    corpus = load_corpus(SAMPLE_CORPUS)
    assert corpus.num_users == expected["users"]
    assert corpus.num_items == expected["items"]
    assert corpus.num_actions == expected["actions"]
    for user in expected["dropped_users"]:
        assert user not in corpus.user_map
    for item in expected["dropped_items"]:
        assert item not in corpus.item_map
    assert sorted(corpus.item_map.values()) == list(range(1, corpus.num_items + 1))


def test_repeated_user_lines_are_concatenated(tmp_path):
    path = tmp_path / "raw.txt"
    path.write_text("a x y\nb y\n\na z\n", encoding="utf-8")
    assert read_raw_sequences(path) == [("a", ["x", "y", "z"]), ("b", ["y"])]


@pytest.mark.sanity
def test_parse_error_carries_line_number(tmp_path):
    path = tmp_path / "raw.txt"
    path.write_text("a x y\nlonely\n", encoding="utf-8")
    with pytest.raises(CorpusParseError, match="line 2") as info:
        read_raw_sequences(path)
    assert info.value.line_number == 2


def test_missing_corpus_is_a_data_error(tmp_path):
    with pytest.raises(DataError):
        read_raw_sequences(tmp_path / "absent.txt")


def test_empty_after_filtering_is_a_data_error():
    with pytest.raises(DataError, match="empty"):
        build_corpus([("a", ["x", "y"])], min_core=5)


def test_prepare_output_reloads_unchanged(tmp_path):
    corpus = load_corpus(SAMPLE_CORPUS)
    out = tmp_path / "corpus.txt"
    write_corpus(corpus, out)
    again = load_corpus(out)
    assert [u.items for u in again.users] == [u.items for u in corpus.users]
    assert [u.user_id for u in again.users] == [u.user_id for u in corpus.users]
    assert all(again.item_map[str(i)] == i for i in range(1, again.num_items + 1))


# ============================
# k-core
# ============================

@pytest.mark.regression
def test_k_core_fixpoint_matches_brute_force():
    rng = np.random.default_rng(2024)
    for trial in range(1000):
        raw = random_raw_corpus(rng)
        k = int(rng.integers(1, 6))
        filtered = dict(k_core_filter(raw, k, fixpoint=True))
        assert filtered == brute_force_k_core(raw, k), f"trial {trial}"
        counts = Counter(i for items in filtered.values() for i in items)
        assert all(len(items) >= k for items in filtered.values())
        assert all(c >= k for c in counts.values())


def test_single_pass_filter_stops_after_one_round():
    # Dropping item z leaves user b with 4 interactions; only the fixpoint removes b.
    raw = [("a", ["x"] * 5), ("b", ["x", "y", "y", "y", "z"]), ("c", ["y", "y", "x", "x", "x"])]
    single = dict(k_core_filter(raw, 5, fixpoint=False))
    assert single["b"] == ["x", "y", "y", "y"]
    fixed = dict(k_core_filter(raw, 5, fixpoint=True))
    assert "b" not in fixed


def test_item_support_counts_interactions_not_sequences():
    raw = [("a", ["x", "x", "x", "y", "y"]), ("b", ["x", "x", "y", "y", "y"])]
    assert dict(k_core_filter(raw, 5)) == dict(raw)


def test_item_ids_follow_first_appearance():
    corpus = build_corpus([("a", ["q", "p", "q"]), ("b", ["r", "p"])], min_core=1)
    assert corpus.item_map == {"q": 1, "p": 2, "r": 3}
    assert corpus.users[1].items == (3, 2)


# ============================
# Stats
# ============================

def test_stats_by_hand(tiny_corpus):
    stats = tiny_corpus.stats()
    assert (stats.users, stats.items, stats.actions) == (3, 12, 18)
    assert stats.avg_length == pytest.approx(6.0)
    assert stats.density == pytest.approx(18 / 36)
    assert "Density 50.00%" in stats.format_line()


@pytest.mark.parametrize("entry", REFERENCE["dataset_statistics"], ids=lambda e: e["dataset"])
def test_benchmark_dataset_statistics(entry):
    assert validate_reference_data(entry, ["dataset", "users", "items", "actions", "avg_length", "density_percent"])
    stats = CorpusStats.of(entry["users"], entry["items"], entry["actions"])
    assert abs(stats.avg_length - entry["avg_length"]) <= 0.1
    assert round(stats.density * 100, 2) == pytest.approx(entry["density_percent"])
    assert f"#Users {entry['users']:,}" in stats.format_line(entry["dataset"])


# ============================
# Splits and instances
# ============================

@pytest.mark.regression
def test_leave_one_out_matches_oracle_without_leakage():
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(1000):
        try:
            corpus = build_corpus(random_raw_corpus(rng), min_core=3)
        except DataError:
            continue
        train, valid, test = split_leave_one_out(corpus)
        for row, user in enumerate(corpus.users):
            items = user.items
            assert train.sequences[row] == items[:-2]
            assert (valid.contexts[row], valid.targets[row]) == (items[:-2], items[-2])
            assert (test.contexts[row], test.targets[row]) == (items[:-1], items[-1])
        for inst in expand_instances(train, horizon=3):
            seq = train.sequences[inst.user_index]
            window = inst.prefix + inst.horizon_items if inst.fs_valid else inst.prefix + (inst.next_target,)
            assert seq[:len(window)] == window
            assert len(window) <= len(corpus.users[inst.user_index].items) - 2
        checked += 1
    assert checked > 200


def test_split_rejects_users_shorter_than_three():
    corpus = build_corpus([("a", ["x", "y"])], min_core=1)
    with pytest.raises(DataError):
        split_leave_one_out(corpus)


@pytest.mark.smoke
@pytest.mark.parametrize("horizon", [1, 2, 3, 5])
def test_prefix_expansion(tiny_corpus, horizon):
    train, _, _ = split_leave_one_out(tiny_corpus)
    instances = expand_instances(train, horizon)
    assert len(instances) == sum(len(s) - 1 for s in train.sequences)
    for inst in instances:
        seq = train.sequences[inst.user_index]
        t = len(inst.prefix)
        assert inst.next_target == seq[t]
        assert inst.fs_valid == (t + horizon <= len(seq)) == inst.fc_valid
        if inst.fs_valid:
            assert inst.future_targets == seq[t + 1:t + horizon]
            assert len(inst.horizon_items) == horizon


def test_expansion_rejects_zero_horizon(tiny_corpus):
    train, _, _ = split_leave_one_out(tiny_corpus)
    with pytest.raises(ContractError):
        expand_instances(train, 0)


# ============================
# Batching
# ============================

def test_pad_left_truncates_to_last_items():
    np.testing.assert_array_equal(pad_left([1, 2, 3, 4, 5], 3), [3, 4, 5])
    np.testing.assert_array_equal(pad_left([7], 3), [PAD_ID, PAD_ID, 7])
    assert strip_padding(pad_left([4, 9], 5)) == [4, 9]
    assert pad_prefixes([], 4).shape == (0, 4)


def test_micro_batch_layout(micro_batch):
    assert micro_batch.prefixes.shape == (4, 4)
    np.testing.assert_array_equal(micro_batch.lengths, [1, 2, 3, 4])
    np.testing.assert_array_equal(micro_batch.prefixes[3], [17, 2, 19, 10])
    np.testing.assert_array_equal(micro_batch.fs_valid, [True, True, False, True])
    np.testing.assert_array_equal(micro_batch.future_targets[2], [PAD_ID, PAD_ID])
    np.testing.assert_array_equal(micro_batch.horizon_items[0], [7, 11, 2])


@pytest.mark.regression
def test_make_batches_covers_every_instance_once(tiny_corpus):
    train, _, _ = split_leave_one_out(tiny_corpus)
    instances = expand_instances(train, 2)
    batches = list(make_batches(instances, batch_size=3, max_len=5, shuffle_seed=11, horizon=2))
    assert [len(b) for b in batches[:-1]] == [3] * (len(batches) - 1)
    assert sum(len(b) for b in batches) == len(instances)
    seen = sorted(int(t) for b in batches for t in b.next_targets)
    assert seen == sorted(inst.next_target for inst in instances)
    again = list(make_batches(instances, batch_size=3, max_len=5, shuffle_seed=11, horizon=2))
    for first, second in zip(batches, again):
        np.testing.assert_array_equal(first.prefixes, second.prefixes)


def test_batch_size_below_two_is_rejected(tiny_corpus):
    train, _, _ = split_leave_one_out(tiny_corpus)
    with pytest.raises(ConfigError):
        list(make_batches(expand_instances(train, 2), batch_size=1))


# ============================
# Synthetic corpora
# ============================

def test_transition_table_is_row_stochastic():
    table = markov_transition_table(20, seed=3)
    np.testing.assert_allclose(table[1:].sum(axis=1), 1.0)
    assert table[0].sum() == 0.0 and table[:, 0].sum() == 0.0
    assert sorted(np.argmax(table[1:], axis=1)) == list(range(1, 21))
    with pytest.raises(ValueError):
        markov_transition_table(5, seed=3)


@pytest.mark.smoke
def test_synth_markov_is_deterministic():
    first = synth_markov(200, 50, 20, transition_seed=7)
    second = synth_markov(200, 50, 20, transition_seed=7)
    assert first.num_users == 200
    assert first.num_items <= 50
    assert [u.items for u in first.users] == [u.items for u in second.users]


def test_noise_changes_the_walks():
    clean = synth_markov(50, 20, 12, transition_seed=1)
    noisy = synth_markov(50, 20, 12, transition_seed=1, noise_rate=0.5)
    assert [u.items for u in clean.users] != [u.items for u in noisy.users]


@pytest.mark.regression
def test_walk_follows_transition_probabilities():
    table = markov_transition_table(10, seed=3)
    chain = sample_chain(table, 100_000, np.random.default_rng([3, 1]))
    counts = np.zeros_like(table)
    np.add.at(counts, (chain[:-1], chain[1:]), 1.0)
    assert np.all(counts[table == 0.0] == 0.0)
    visited = counts.sum(axis=1) >= 5000
    assert visited.any()
    frequencies = counts[visited] / counts[visited].sum(axis=1, keepdims=True)
    observed = frequencies[table[visited] > 0.0]
    expected = table[visited][table[visited] > 0.0]
    assert np.max(np.abs(observed - expected)) <= 0.02
