"""
Differentiable operations used by the occupancy decoders and their losses.

Only what the decoders need is provided: affine layers, ReLU, sigmoid,
column concatenation, inverted dropout, binary cross-entropy and a handful
of elementwise helpers for composing occupancies and regularizers.
Broadcasting is limited to the bias of ``linear`` and to Python scalars.
"""
from __future__ import annotations

from typing import Any, Dict, Optional, Sequence, Union

import numpy as np

from autodiff.tape import Tensor, active_tape, backward_rule, default_dtype
from core.runtime.errors import DimensionError, NumericError, ParameterError

BCE_EPS = 1e-7

Scalar = Union[int, float]


def as_tensor(value: Any) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=default_dtype()))


def _emit(kind: str, inputs: Sequence[Tensor], data: np.ndarray, ctx: Optional[Dict[str, Any]] = None) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite values produced by '{kind}'")
    tape = active_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=track, dtype=data.dtype)
    if track:
        tape.record(kind, inputs, out, ctx)
    return out


# --- affine / activations ---------------------------------------------------

def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight + bias`` with the bias broadcast over the batch."""
    if x.data.ndim != 2 or weight.data.ndim != 2 or bias.data.ndim != 1:
        raise DimensionError(f"linear expects [B,I]x[I,O]+[O], got {x.shape} x {weight.shape} + {bias.shape}")
    if x.shape[1] != weight.shape[0] or weight.shape[1] != bias.shape[0]:
        raise DimensionError(f"linear shape mismatch: {x.shape} x {weight.shape} + {bias.shape}")
    return _emit("linear", (x, weight, bias), x.data @ weight.data + bias.data)


@backward_rule("linear")
def _linear_backward(entry, g):
    x, weight, _ = entry.inputs
    gx = g @ weight.data.T if x.requires_grad else None
    gw = x.data.T @ g if weight.requires_grad else None
    gb = g.sum(axis=0) if entry.inputs[2].requires_grad else None
    return gx, gw, gb


def relu(x: Tensor) -> Tensor:
    return _emit("relu", (x,), np.maximum(x.data, 0))


@backward_rule("relu")
def _relu_backward(entry, g):
    # subgradient at 0 is 0
    return (g * (entry.inputs[0].data > 0),)


def _stable_sigmoid(v: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(v.dtype, copy=False)


def sigmoid(x: Tensor) -> Tensor:
    return _emit("sigmoid", (x,), _stable_sigmoid(x.data))


@backward_rule("sigmoid")
def _sigmoid_backward(entry, g):
    s = entry.output.data
    return (g * s * (1 - s),)


def concat(*tensors: Tensor, axis: int = 1) -> Tensor:
    """Concatenate 2-D tensors; columnwise by default, rowwise with ``axis=0``."""
    if not tensors:
        raise DimensionError("concat needs at least one tensor")
    if any(t.data.ndim != 2 for t in tensors):
        raise DimensionError("concat expects 2-D tensors")
    other = 1 - axis
    extents = {t.shape[other] for t in tensors}
    if len(extents) != 1:
        raise DimensionError(f"concat: mismatched extents along axis {other}: {[t.shape for t in tensors]}")
    sizes = [t.shape[axis] for t in tensors]
    return _emit("concat", tensors, np.concatenate([t.data for t in tensors], axis=axis), {"axis": axis, "sizes": sizes})


@backward_rule("concat")
def _concat_backward(entry, g):
    axis = entry.ctx["axis"]
    offsets = np.cumsum(entry.ctx["sizes"])[:-1]
    return tuple(np.split(g, offsets, axis=axis))


def dropout(x: Tensor, rate: float, training: bool, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout: survivors scaled by ``1/(1-rate)``; identity in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ParameterError("dropout in training mode needs a generator")
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.data.dtype) / x.data.dtype.type(1.0 - rate)
    return _emit("dropout", (x,), x.data * mask, {"mask": mask})


@backward_rule("dropout")
def _dropout_backward(entry, g):
    return (g * entry.ctx["mask"],)


# --- losses -----------------------------------------------------------------

def bce(prediction: Tensor, target: Any) -> Tensor:
    """Mean binary cross-entropy; predictions clamped to ``[eps, 1-eps]``."""
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=prediction.data.dtype)
    if t.shape != prediction.shape:
        raise DimensionError(f"bce: prediction {prediction.shape} vs target {t.shape}")
    if t.size and (t.min() < 0 or t.max() > 1):
        raise ParameterError("bce targets must lie in [0, 1]")
    dtype = prediction.data.dtype
    eps = dtype.type(BCE_EPS)
    p = np.clip(prediction.data, eps, dtype.type(1) - eps)
    t = t.astype(dtype, copy=False)
    losses = -(t * np.log(p) + (1 - t) * np.log1p(-p))
    value = np.asarray(losses.mean(), dtype=dtype)
    inside = (prediction.data > eps) & (prediction.data < 1 - eps)
    return _emit("bce", (prediction,), value, {"p": p, "t": t, "inside": inside})


@backward_rule("bce")
def _bce_backward(entry, g):
    p, t, inside = entry.ctx["p"], entry.ctx["t"], entry.ctx["inside"]
    grad = (p - t) / (p * (1 - p)) / p.size
    return (g * grad * inside,)


# --- elementwise helpers ----------------------------------------------------

def _same_shape(kind: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{kind}: shape mismatch {a.shape} vs {b.shape}")


def add(a: Any, b: Any) -> Tensor:
    if isinstance(b, (int, float)):
        return add_scalar(as_tensor(a), b)
    if isinstance(a, (int, float)):
        return add_scalar(as_tensor(b), a)
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("add", a, b)
    return _emit("add", (a, b), a.data + b.data)


@backward_rule("add")
def _add_backward(entry, g):
    return g, g


def add_scalar(a: Tensor, c: Scalar) -> Tensor:
    return _emit("add_scalar", (a,), a.data + a.data.dtype.type(c))


@backward_rule("add_scalar")
def _add_scalar_backward(entry, g):
    return (g,)


def sub(a: Any, b: Any) -> Tensor:
    if isinstance(b, (int, float)):
        return add_scalar(as_tensor(a), -b)
    if isinstance(a, (int, float)):
        b = as_tensor(b)
        return _emit("rsub_scalar", (b,), b.data.dtype.type(a) - b.data)
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("sub", a, b)
    return _emit("sub", (a, b), a.data - b.data)


@backward_rule("sub")
def _sub_backward(entry, g):
    return g, -g


@backward_rule("rsub_scalar")
def _rsub_scalar_backward(entry, g):
    return (-g,)


def mul(a: Any, b: Any) -> Tensor:
    if isinstance(b, (int, float)):
        return scale(as_tensor(a), b)
    if isinstance(a, (int, float)):
        return scale(as_tensor(b), a)
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("mul", a, b)
    return _emit("mul", (a, b), a.data * b.data)


@backward_rule("mul")
def _mul_backward(entry, g):
    a, b = entry.inputs
    return g * b.data, g * a.data


def scale(a: Tensor, c: Scalar) -> Tensor:
    return _emit("scale", (a,), a.data * a.data.dtype.type(c), {"c": c})


@backward_rule("scale")
def _scale_backward(entry, g):
    return (g * entry.ctx["c"],)


def mean(a: Tensor) -> Tensor:
    return _emit("mean", (a,), np.asarray(a.data.mean(), dtype=a.data.dtype))


@backward_rule("mean")
def _mean_backward(entry, g):
    x = entry.inputs[0].data
    return (np.full_like(x, g.reshape(()) / x.size),)


def total(a: Tensor) -> Tensor:
    return _emit("sum", (a,), np.asarray(a.data.sum(), dtype=a.data.dtype))


@backward_rule("sum")
def _sum_backward(entry, g):
    x = entry.inputs[0].data
    return (np.full_like(x, g.reshape(())),)


def repeat_rows(z: Tensor, n: int) -> Tensor:
    """Tile a latent vector ``[D]`` into ``[n, D]`` so it can join a point batch."""
    if z.data.ndim != 1:
        raise DimensionError(f"repeat_rows expects a vector, got {z.shape}")
    return _emit("repeat_rows", (z,), np.broadcast_to(z.data, (n, z.shape[0])).copy())


@backward_rule("repeat_rows")
def _repeat_rows_backward(entry, g):
    return (g.sum(axis=0),)
