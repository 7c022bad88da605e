"""
Central finite-difference check of tape gradients.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional

import numpy as np

from autodiff.tape import Tape, Tensor
from core.runtime.errors import ParameterError


@dataclass
class GradCheckReport:
    tolerance: float
    max_rel_error: Dict[str, float] = field(default_factory=dict)
    max_abs_grad: Dict[str, float] = field(default_factory=dict)

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst < self.tolerance

    def failing(self) -> Dict[str, float]:
        return {k: v for k, v in self.max_rel_error.items() if v >= self.tolerance}


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    tolerance: float = 1e-4,
    h: float = 1e-5,
    *,
    atol: float = 1e-6,
    max_elements: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckReport:
    """Compare tape gradients of ``loss_fn()`` with central differences.

    ``loss_fn`` must be deterministic (seed any dropout inside it). The
    relative error per element is ``|a - n| / max(|a|, |n|, atol)``; the
    report holds the maximum per parameter. ``max_elements`` caps how many
    entries of each parameter are checked (chosen with ``rng``).
    """
    for name, p in params.items():
        if p.data.dtype != np.float64:
            raise ParameterError(f"grad_check needs float64 parameters; '{name}' is {p.data.dtype}")
    for p in params.values():
        p.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
    tape.backward(loss)
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for name, p in params.items()}

    report = GradCheckReport(tolerance=tolerance)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        indices = np.arange(flat.size)
        if max_elements is not None and flat.size > max_elements:
            picker = rng if rng is not None else np.random.default_rng(0)
            indices = np.sort(picker.choice(flat.size, size=max_elements, replace=False))
        a_flat = analytic[name].reshape(-1)
        worst = 0.0
        for i in indices:
            original = flat[i]
            flat[i] = original + h
            plus = loss_fn().item()
            flat[i] = original - h
            minus = loss_fn().item()
            flat[i] = original
            numeric = (plus - minus) / (2 * h)
            a = float(a_flat[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), atol)
            worst = max(worst, err)
        report.max_rel_error[name] = worst
        report.max_abs_grad[name] = float(np.max(np.abs(a_flat))) if a_flat.size else 0.0
        p.zero_grad()
    return report
