"""
Differentiable operations over Tensor.

Every op computes its value with numpy and, under an active Tape, records a
backward rule that maps the output cotangent to one cotangent per input.
"""
from typing import Optional, Sequence

import numpy as np

from numcore.tensor import Tensor, as_tensor, current_tape
from utils.exceptions import DimensionError, NumericError


def _make(name: str, data: np.ndarray, inputs: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor(data)
    tape = current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(name, inputs, out, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum grad down to shape, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(name: str, a: Tensor, b: Tensor):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{name}: shapes {a.shape} and {b.shape} do not broadcast") from None


def _check_finite(name: str, x: Tensor) -> None:
    if not np.all(np.isfinite(x.data)):
        raise NumericError(f"{name}: non-finite input")


# ============================
# Elementwise
# ============================

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make("add", a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make("sub", a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make("mul", a.data * b.data, (a, b), backward)


def scalar_mul(x: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g):
        return (g * c,)

    return _make("scalar_mul", x.data * c, (x,), backward)


def exp(x: Tensor) -> Tensor:
    out_data = np.exp(x.data)

    def backward(g):
        return (g * out_data,)

    return _make("exp", out_data, (x,), backward)


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise NumericError("log: non-positive input")

    def backward(g):
        return (g / x.data,)

    return _make("log", np.log(x.data), (x,), backward)


def relu(x: Tensor) -> Tensor:
    # subgradient at 0 is 0
    mask = x.data > 0

    def backward(g):
        return (g * mask,)

    return _make("relu", np.where(mask, x.data, 0.0), (x,), backward)


def p_log_p(p: Tensor, eps: float) -> Tensor:
    """Elementwise p * ln p, with entries below eps contributing exactly 0."""
    keep = p.data >= eps
    safe = np.where(keep, p.data, 1.0)

    def backward(g):
        return (np.where(keep, g * (np.log(safe) + 1.0), 0.0),)

    return _make("p_log_p", np.where(keep, safe * np.log(safe), 0.0), (p,), backward)


def dropout(x: Tensor, p: float, train: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout: survivors scaled by 1/(1-p) in training, identity otherwise."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs a random generator")
    scale = (rng.random(x.shape) >= p) / (1.0 - p)

    def backward(g):
        return (g * scale,)

    return _make("dropout", x.data * scale, (x,), backward)


def detach(x: Tensor) -> Tensor:
    """Value copy with no path back to x."""
    return Tensor(x.data.copy(), requires_grad=False)


# ============================
# Reductions and shape
# ============================

def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out_data = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make("sum", out_data, (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return scalar_mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def mean_lastdim(x: Tensor) -> Tensor:
    return mean(x, axis=-1)


def reshape(x: Tensor, shape) -> Tensor:
    def backward(g):
        return (g.reshape(x.shape),)

    return _make("reshape", x.data.reshape(shape), (x,), backward)


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inverse),)

    return _make("transpose", np.transpose(x.data, axes), (x,), backward)


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    trailing = {t.shape[1:] for t in tensors}
    if len(trailing) != 1:
        raise DimensionError(f"concat_rows: trailing shapes differ {sorted(trailing)}")
    bounds = np.cumsum([t.shape[0] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=0))

    return _make("concat_rows", np.concatenate([t.data for t in tensors], axis=0), tensors, backward)


def select(x: Tensor, index: int, axis: int) -> Tensor:
    """x taken at one index along axis; the axis is dropped."""
    def backward(g):
        full = np.zeros_like(x.data)
        slicer = [slice(None)] * x.ndim
        slicer[axis] = index
        full[tuple(slicer)] = g
        return (full,)

    return _make("select", np.take(x.data, index, axis=axis), (x,), backward)


# ============================
# Linear algebra
# ============================

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(f"matmul: batch dims of {a.shape} and {b.shape} do not broadcast") from None

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make("matmul", np.matmul(a.data, b.data), (a, b), backward)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """
    Gather rows of table.

    Args:
        table: Tensor[V x d]
        ids: Integer array of any shape, values in [0, V)

    Returns:
        Tensor[ids.shape + (d,)]; backward scatter-adds into table
    """
    ids = np.asarray(ids, dtype=np.int64)
    rows = table.shape[0]
    bad = ids[(ids < 0) | (ids >= rows)]
    if bad.size:
        raise IndexError(f"embedding_lookup: id {int(bad.reshape(-1)[0])} out of range [0, {rows})")

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        return (full,)

    return _make("embedding_lookup", table.data[ids], (table,), backward)


gather_rows = embedding_lookup


def pick_lastdim(x: Tensor, index) -> Tensor:
    """out[...] = x[..., index[...]]."""
    index = np.asarray(index, dtype=np.int64)
    if index.shape != x.shape[:-1]:
        raise DimensionError(f"pick_lastdim: index shape {index.shape} does not match {x.shape[:-1]}")
    picked = np.take_along_axis(x.data, index[..., None], axis=-1)[..., 0]

    def backward(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, index[..., None], g[..., None], axis=-1)
        return (full,)

    return _make("pick_lastdim", picked, (x,), backward)


# ============================
# Normalization
# ============================

def softmax_lastdim(x: Tensor) -> Tensor:
    _check_finite("softmax_lastdim", x)
    shifted = np.exp(x.data - x.data.max(axis=-1, keepdims=True))
    y = shifted / shifted.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _make("softmax_lastdim", y, (x,), backward)


def log_softmax_lastdim(x: Tensor) -> Tensor:
    _check_finite("log_softmax_lastdim", x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    out_data = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    y = np.exp(out_data)

    def backward(g):
        return (g - y * g.sum(axis=-1, keepdims=True),)

    return _make("log_softmax_lastdim", out_data, (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float) -> Tensor:
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"layer_norm: gain {gain.shape} / bias {bias.shape} do not match last dim {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    x_hat = centered * inv_std

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        g_hat = g * gain.data
        gx = inv_std * (
            g_hat
            - g_hat.mean(axis=-1, keepdims=True)
            - x_hat * (g_hat * x_hat).mean(axis=-1, keepdims=True)
        )
        return gx, (g * x_hat).sum(axis=lead), g.sum(axis=lead)

    return _make("layer_norm", x_hat * gain.data + bias.data, (x, gain, bias), backward)
