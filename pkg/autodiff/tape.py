"""
Tensors and the recording tape for reverse-mode differentiation.

Operations (see ``autodiff.ops``) append a ``TapeEntry`` to the active tape
whenever one of their inputs requires a gradient. ``Tape.backward`` walks the
entries in exact reverse recording order and dispatches each entry to the
rule registered for its op kind in ``BACKWARD_RULES``.
"""
from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from core.runtime.errors import NumericError

_node_ids = itertools.count()
_state = threading.local()

DEFAULT_DTYPE = np.dtype(np.float32)


def default_dtype() -> np.dtype:
    return getattr(_state, "dtype", DEFAULT_DTYPE)


@contextmanager
def precision(dtype: Any) -> Iterator[np.dtype]:
    """Temporarily switch the dtype new tensors are created with (e.g. float64 for gradient checks)."""
    previous = default_dtype()
    _state.dtype = np.dtype(dtype)
    try:
        yield _state.dtype
    finally:
        _state.dtype = previous


def set_default_dtype(dtype: Any) -> None:
    _state.dtype = np.dtype(dtype)


class Tensor:
    """Dense row-major array participating in the differentiation graph."""

    __slots__ = ("data", "requires_grad", "grad", "node_id", "name")

    def __init__(self, data: Any, requires_grad: bool = False, name: Optional[str] = None, dtype: Any = None) -> None:
        self.data = np.ascontiguousarray(data, dtype=dtype if dtype is not None else default_dtype())
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.node_id = next(_node_ids)
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False, name=self.name, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{label}, requires_grad={self.requires_grad})"

    # Arithmetic delegates to autodiff.ops so every path is recorded.
    def __add__(self, other: Any) -> "Tensor":
        from autodiff import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other: Any) -> "Tensor":
        from autodiff import ops

        return ops.sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        from autodiff import ops

        return ops.sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        from autodiff import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        from autodiff import ops

        return ops.scale(self, -1.0)


@dataclass
class TapeEntry:
    kind: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    ctx: Dict[str, Any] = field(default_factory=dict)


BackwardRule = Callable[[TapeEntry, np.ndarray], Sequence[Optional[np.ndarray]]]

# op kind -> rule returning one gradient (or None) per input.
BACKWARD_RULES: Dict[str, BackwardRule] = {}


def backward_rule(kind: str) -> Callable[[BackwardRule], BackwardRule]:
    def register(fn: BackwardRule) -> BackwardRule:
        BACKWARD_RULES[kind] = fn
        return fn

    return register


def _active_stack() -> List["Tape"]:
    stack = getattr(_state, "tapes", None)
    if stack is None:
        stack = []
        _state.tapes = stack
    return stack


def active_tape() -> Optional["Tape"]:
    stack = _active_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of operations; one per optimization step."""

    def __init__(self) -> None:
        self.entries: List[TapeEntry] = []

    def __enter__(self) -> "Tape":
        _active_stack().append(self)
        return self

    def __exit__(self, *exc: object) -> None:
        stack = _active_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, kind: str, inputs: Sequence[Tensor], output: Tensor, ctx: Optional[Dict[str, Any]] = None) -> None:
        self.entries.append(TapeEntry(kind=kind, inputs=tuple(inputs), output=output, ctx=ctx or {}))

    def validate(self) -> None:
        """Check topological order: every input was created before its consumer's output."""
        for entry in self.entries:
            for tensor in entry.inputs:
                if tensor.node_id >= entry.output.node_id:
                    raise AssertionError(f"tape entry {entry.kind} consumes node {tensor.node_id} created after its output")

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf tensor that requires a gradient."""
        if loss.size != 1:
            raise NumericError(f"backward expects a scalar loss, got shape {loss.shape}")
        grads: Dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
        produced = {entry.output.node_id for entry in self.entries}
        leaves: Dict[int, Tensor] = {}
        for entry in reversed(self.entries):
            out_grad = grads.pop(entry.output.node_id, None)
            if out_grad is None:
                continue
            rule = BACKWARD_RULES[entry.kind]
            in_grads = rule(entry, out_grad)
            for tensor, g in zip(entry.inputs, in_grads):
                if g is None or not tensor.requires_grad:
                    continue
                if not np.all(np.isfinite(g)):
                    raise NumericError(f"non-finite gradient flowing out of '{entry.kind}'")
                if tensor.node_id in grads:
                    grads[tensor.node_id] = grads[tensor.node_id] + g
                else:
                    grads[tensor.node_id] = g
                if tensor.node_id not in produced:
                    leaves[tensor.node_id] = tensor
        for node_id, tensor in leaves.items():
            g = grads[node_id].astype(tensor.data.dtype, copy=False)
            tensor.grad = g if tensor.grad is None else tensor.grad + g
