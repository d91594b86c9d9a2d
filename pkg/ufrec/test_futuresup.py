"""
Tests for uncertainty-guided future supervision: entropy, confidence weights,
step projections and the masked multi-step loss.
"""
import numpy as np
import pytest

from models.futuresup import (
    FutureSupervision,
    confidence_weight,
    entropy,
    future_loss,
    step_cross_entropy,
)
from numcore import ops
from numcore.tensor import Tape, Tensor
from utils.constants import PAD_ID, TAU_GRID
from utils.exceptions import ContractError, DimensionError
from utils.logger import get_logger

logger = get_logger()


def omega_of(probs, tau):
    return confidence_weight(entropy(Tensor(probs)), tau).data


# ============================
# Confidence weights
# ============================

@pytest.mark.smoke
@pytest.mark.parametrize("tau", TAU_GRID)
def test_certain_prediction_has_weight_exactly_one(tau):
    probs = np.zeros((1, 21))
    probs[0, 4] = 1.0
    assert omega_of(probs, tau)[0] == 1.0


@pytest.mark.regression
@pytest.mark.parametrize("n", [2, 100, 12102])
@pytest.mark.parametrize("tau", TAU_GRID)
def test_uniform_prediction_weight(n, tau):
    probs = np.full((1, n), 1.0 / n)
    assert abs(omega_of(probs, tau)[0] - n ** (-1.0 / tau)) < 1e-9


def test_weight_decreases_with_entropy(rng):
    logits = rng.normal(scale=rng.uniform(0.1, 5.0, size=(1000, 1)), size=(1000, 30))
    probs = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    ent = entropy(Tensor(probs)).data
    omega = confidence_weight(Tensor(ent), 3.0).data
    order = np.argsort(ent)
    assert np.all(np.diff(omega[order]) <= 0.0)
    assert np.all((omega > 0.0) & (omega <= 1.0))


def test_entropy_bounds(rng):
    probs = rng.dirichlet(np.ones(12), size=50)
    ent = entropy(Tensor(probs)).data
    assert np.all(ent >= 0.0) and np.all(ent <= np.log(12) + 1e-12)


@pytest.mark.sanity
def test_entropy_rejects_non_distributions():
    with pytest.raises(ContractError):
        entropy(Tensor(np.full((1, 4), 0.5)))


@pytest.mark.sanity
def test_confidence_weight_rejects_non_positive_tau():
    with pytest.raises(ContractError):
        confidence_weight(Tensor([0.5]), 0.0)


def test_weight_is_detached_by_default(rng):
    logits = Tensor(rng.normal(size=(2, 5)), requires_grad=True)
    with Tape():
        detached = confidence_weight(entropy(ops.softmax_lastdim(logits)), 2.0)
        attached = confidence_weight(entropy(ops.softmax_lastdim(logits)), 2.0, detach=False)
    assert not detached.requires_grad
    assert attached.requires_grad


# ============================
# Step projections
# ============================

@pytest.mark.regression
def test_batched_projection_equals_sequential_loop(rng):
    head = FutureSupervision(8, 5, rng, init_std=0.3)
    head.bias.data = rng.normal(scale=0.1, size=head.bias.shape)
    h = Tensor(rng.normal(size=(6, 8)))
    batched = head.project_future(h).data
    sequential = head.project_future_sequential(h).data
    assert batched.shape == (6, 4, 8)
    np.testing.assert_allclose(batched, sequential, rtol=0, atol=1e-12)
    assert np.all(batched >= 0.0)


def test_projection_gradients_match_sequential_loop(rng):
    head = FutureSupervision(8, 3, rng, init_std=0.3)
    h = Tensor(rng.normal(size=(4, 8)))
    weights = Tensor(rng.normal(size=(4, 2, 8)))
    grads = []
    for project in (head.project_future, head.project_future_sequential):
        head.zero_grad()
        with Tape() as tape:
            loss = ops.sum(ops.mul(project(h), weights))
        tape.backward(loss)
        grads.append(head.weight.grad.copy())
    np.testing.assert_allclose(grads[0], grads[1], atol=1e-12)


def test_horizon_below_two_is_rejected(rng):
    with pytest.raises(ContractError):
        FutureSupervision(8, 1, rng)


# ============================
# Multi-step loss
# ============================

def make_case(rng, n=4, steps=2, vocab=7):
    logits = Tensor(rng.normal(size=(n, steps, vocab)), requires_grad=True)
    targets = rng.integers(1, vocab, size=(n, steps))
    return logits, targets


@pytest.mark.smoke
def test_future_loss_matches_manual_sum(rng):
    logits, targets = make_case(rng)
    valid = np.array([True, False, True, True])
    targets[1] = PAD_ID
    omega = np.array([0.5, 0.9, 1.0, 0.25])
    log_probs = logits.data - np.log(np.exp(logits.data).sum(axis=-1, keepdims=True))
    ce = -np.take_along_axis(log_probs, targets[..., None], axis=-1)[..., 0]
    per_sample = omega * ce.mean(axis=1)
    expected_valid = per_sample[valid].sum() / valid.sum()
    expected_batch = per_sample[valid].sum() / len(valid)
    assert future_loss(logits, targets, valid, omega).item() == pytest.approx(expected_valid, abs=1e-12)
    assert future_loss(logits, targets, valid, omega, "batch_mean").item() == pytest.approx(expected_batch, abs=1e-12)


@pytest.mark.regression
def test_invalid_rows_get_exactly_zero_gradient(rng):
    logits, targets = make_case(rng)
    valid = np.array([True, False, False, True])
    with Tape() as tape:
        loss = future_loss(logits, targets, valid, np.ones(4))
    tape.backward(loss)
    assert np.all(logits.grad[~valid] == 0.0)
    assert np.any(logits.grad[valid] != 0.0)


def test_no_valid_row_gives_zero_without_graph(rng):
    logits, targets = make_case(rng)
    loss = future_loss(logits, np.zeros_like(targets), np.zeros(4, dtype=bool), np.ones(4))
    assert loss.item() == 0.0
    assert not loss.requires_grad


@pytest.mark.sanity
def test_future_loss_contracts(rng):
    logits, targets = make_case(rng)
    bad = targets.copy()
    bad[0, 1] = PAD_ID
    with pytest.raises(ContractError):
        future_loss(logits, bad, np.ones(4, dtype=bool), np.ones(4))
    with pytest.raises(DimensionError):
        future_loss(logits, targets[:, :1], np.ones(4, dtype=bool), np.ones(4))


def test_step_cross_entropy_shape(rng):
    logits, targets = make_case(rng, n=3, steps=4)
    assert step_cross_entropy(logits, targets).shape == (3, 4)
