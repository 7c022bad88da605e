"""
Adam with named parameter groups.

Parameters whose gradient is ``None`` for a step (e.g. latents of instances
not drawn into the batch) are skipped and keep their own step counter, so
bias correction stays exact per parameter.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional

import numpy as np

from autodiff.tape import Tensor
from core.runtime.errors import DimensionError, OptimizationError, ParameterError


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    param_steps: Dict[str, int] = field(default_factory=dict)


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, Optional[np.ndarray]], state: AdamState) -> None:
    """Apply one bias-corrected Adam update in place.

    All gradients are validated before any parameter moves, so a non-finite
    gradient leaves the whole group untouched.
    """
    live: List[tuple[str, Tensor, np.ndarray]] = []
    for name, param in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != param.shape:
            raise DimensionError(f"gradient for '{name}' has shape {g.shape}, parameter has {param.shape}")
        if not np.all(np.isfinite(g)):
            raise OptimizationError(name)
        live.append((name, param, g.astype(param.data.dtype, copy=False)))

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    for name, param, g in live:
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            state.v[name] = np.zeros_like(param.data)
        t = state.param_steps.get(name, 0) + 1
        m = b1 * m + (1 - b1) * g
        v = b2 * state.v[name] + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        param.data -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(param.data.dtype, copy=False)
        state.m[name], state.v[name], state.param_steps[name] = m, v, t


@dataclass
class ParamGroup:
    name: str
    params: Dict[str, Tensor]
    lr: float
    frozen: bool = False

    def size(self) -> int:
        return int(sum(p.size for p in self.params.values()))


class Adam:
    """Adam over several parameter groups, each with its own learning rate."""

    def __init__(self, groups: Iterable[ParamGroup], betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> None:
        self.groups: Dict[str, ParamGroup] = {}
        self.states: Dict[str, AdamState] = {}
        for group in groups:
            if group.lr <= 0:
                raise ParameterError(f"learning rate of group '{group.name}' must be positive")
            if group.name in self.groups:
                raise ParameterError(f"duplicate parameter group '{group.name}'")
            self.groups[group.name] = group
            self.states[group.name] = AdamState(lr=group.lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def step(self) -> None:
        for name, group in self.groups.items():
            if group.frozen:
                continue
            grads = {k: p.grad for k, p in group.params.items()}
            adam_step(group.params, grads, self.states[name])

    def zero_grad(self) -> None:
        for group in self.groups.values():
            for p in group.params.values():
                p.zero_grad()

    def state_dict(self) -> Dict[str, object]:
        """Flat view used by checkpoints: arrays keyed ``group/param/{m,v}`` plus counters."""
        arrays: Dict[str, np.ndarray] = {}
        counters: Dict[str, object] = {}
        for gname, state in self.states.items():
            counters[gname] = {"step": state.step, "param_steps": dict(state.param_steps), "lr": state.lr}
            for pname in state.m:
                arrays[f"{gname}/{pname}/m"] = state.m[pname]
                arrays[f"{gname}/{pname}/v"] = state.v[pname]
        return {"arrays": arrays, "counters": counters}

    def load_state_dict(self, payload: Mapping[str, object]) -> None:
        arrays: Mapping[str, np.ndarray] = payload["arrays"]  # type: ignore[assignment]
        counters: Mapping[str, Mapping[str, object]] = payload["counters"]  # type: ignore[assignment]
        for gname, info in counters.items():
            if gname not in self.states:
                raise ParameterError(f"optimizer state names unknown group '{gname}'")
            state = self.states[gname]
            state.step = int(info["step"])  # type: ignore[arg-type]
            state.param_steps = {k: int(v) for k, v in dict(info["param_steps"]).items()}  # type: ignore[arg-type]
            state.m, state.v = {}, {}
        for key, value in arrays.items():
            gname, pname, which = key.rsplit("/", 2)
            target = self.states[gname].m if which == "m" else self.states[gname].v
            target[pname] = np.array(value, copy=True)
