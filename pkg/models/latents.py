"""
Per-instance latent codes (auto-decoder: no encoder, codes are optimized directly).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable

import numpy as np

from autodiff.tape import Tensor, default_dtype
from core.runtime.errors import ParameterError


@dataclass
class LatentPair:
    instance_id: str
    z_c: Tensor
    z_b: Tensor

    def params(self) -> Dict[str, Tensor]:
        return {f"{self.instance_id}.z_c": self.z_c, f"{self.instance_id}.z_b": self.z_b}

    def copy(self, requires_grad: bool = True) -> "LatentPair":
        return LatentPair(
            self.instance_id,
            Tensor(self.z_c.data.copy(), requires_grad=requires_grad, name=self.z_c.name, dtype=self.z_c.data.dtype),
            Tensor(self.z_b.data.copy(), requires_grad=requires_grad, name=self.z_b.name, dtype=self.z_b.data.dtype),
        )

    @classmethod
    def from_arrays(cls, instance_id: str, z_c: np.ndarray, z_b: np.ndarray, requires_grad: bool = True) -> "LatentPair":
        if not (np.all(np.isfinite(z_c)) and np.all(np.isfinite(z_b))):
            raise ParameterError(f"latent code of {instance_id} is not finite")
        return cls(
            instance_id,
            Tensor(z_c, requires_grad=requires_grad, name=f"{instance_id}.z_c"),
            Tensor(z_b, requires_grad=requires_grad, name=f"{instance_id}.z_b"),
        )


def draw_latent(instance_id: str, d_c: int, d_b: int, sigma0: float, rng: np.random.Generator) -> LatentPair:
    if sigma0 <= 0:
        raise ParameterError(f"latent init sigma must be > 0, got {sigma0}")
    dtype = default_dtype()
    z_c = rng.normal(0.0, sigma0, size=d_c).astype(dtype)
    z_b = rng.normal(0.0, sigma0, size=d_b).astype(dtype)
    return LatentPair.from_arrays(instance_id, z_c, z_b)


def init_latents(
    instance_ids: Iterable[str],
    d_c: int,
    d_b: int,
    sigma0: float,
    rng: np.random.Generator,
) -> Dict[str, LatentPair]:
    """Entries i.i.d. Normal(0, sigma0^2), drawn in sorted id order."""
    return {iid: draw_latent(iid, d_c, d_b, sigma0, rng) for iid in sorted(instance_ids)}
