"""
Occupancy losses: BCE on the complete, break, fractured and restoration terms.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict

import numpy as np

from autodiff import ops
from autodiff.tape import Tensor
from core.runtime.errors import DimensionError
from models.decoder import OccupancyPrediction


@dataclass
class LossTerms:
    l_c: Tensor
    l_b: Tensor
    l_f: Tensor
    l_r: Tensor

    @property
    def total(self) -> Tensor:
        return ops.add(ops.add(self.l_c, self.l_b), ops.add(self.l_f, self.l_r))

    def values(self) -> Dict[str, float]:
        out = {k: getattr(self, k).item() for k in ("l_c", "l_b", "l_f", "l_r")}
        out["total"] = float(sum(out.values()))
        return out


def _column(labels: np.ndarray, n: int, name: str) -> np.ndarray:
    labels = np.asarray(labels).reshape(-1)
    if labels.shape[0] != n:
        raise DimensionError(f"{name} labels have {labels.shape[0]} entries for {n} predictions")
    return labels.reshape(-1, 1)


def loss_terms(prediction: OccupancyPrediction, o_c: np.ndarray, o_b: np.ndarray) -> LossTerms:
    """Mean-reduced BCE per term; the o_F and o_R targets are derived from binary o_C, o_B."""
    n = prediction.o_c.shape[0]
    c = _column(o_c, n, "o_C").astype(np.uint8)
    b = _column(o_b, n, "o_B").astype(np.uint8)
    return LossTerms(
        l_c=ops.bce(prediction.o_c, c),
        l_b=ops.bce(prediction.o_b, b),
        l_f=ops.bce(prediction.o_f, c * b),
        l_r=ops.bce(prediction.o_r, c * (1 - b)),
    )


def fracture_loss(prediction: OccupancyPrediction, o_f: np.ndarray) -> Tensor:
    """L_F alone, against the observed fractured occupancy."""
    return ops.bce(prediction.o_f, _column(o_f, prediction.o_f.shape[0], "o_F"))


def restoration_loss(prediction: OccupancyPrediction, o_r: np.ndarray) -> Tensor:
    return ops.bce(prediction.o_r, _column(o_r, prediction.o_r.shape[0], "o_R"))
