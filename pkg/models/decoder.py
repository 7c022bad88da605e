"""
Twin occupancy decoders.

f (complete shape) maps x ⊕ z_C through ``n_layers`` linear layers with a
skip after ``skip_layer`` layers; g (break set) maps x ⊕ z_B through the same
depth without a skip. Both end in a sigmoid. Fractured and restoration
occupancies are composed from their outputs, never predicted directly:

    o_F = o_C · o_B        o_R = o_C · (1 - o_B)
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from autodiff import ops
from autodiff.optim import ParamGroup
from autodiff.tape import Tensor, active_tape, default_dtype
from core.runtime.errors import DimensionError, NumericError, ParameterError
from core.runtime.rng import substream
from core.schemas.config import ModelConfig
from models.latents import LatentPair

SkipMode = Literal["concat", "replace", "none"]
POINT_DIM = 3


@dataclass(frozen=True)
class LayerSpec:
    fan_in: int
    fan_out: int


def layer_specs(latent_dim: int, width: int, n_layers: int, skip_layer: Optional[int], skip_mode: SkipMode) -> List[LayerSpec]:
    """Input/output widths of every linear layer."""
    d_in = POINT_DIM + latent_dim
    specs = []
    for i in range(n_layers):
        fan_in = d_in if i == 0 else width
        fan_out = 1 if i == n_layers - 1 else width
        if skip_layer is not None and skip_mode != "none":
            if skip_mode == "concat" and i == skip_layer:
                fan_in = width + d_in
            if skip_mode == "replace" and i == skip_layer - 1:
                fan_out = width - d_in
        specs.append(LayerSpec(fan_in, fan_out))
    return specs


class OccupancyDecoder:
    """One MLP decoder; parameters live in ``self.params`` keyed ``{name}.{i}.weight|bias``."""

    def __init__(
        self,
        name: str,
        latent_dim: int,
        width: int = 512,
        n_layers: int = 8,
        skip_layer: Optional[int] = None,
        skip_mode: SkipMode = "none",
        dropout: float = 0.2,
    ) -> None:
        if latent_dim < 1:
            raise ParameterError(f"latent dimension must be >= 1, got {latent_dim}")
        if skip_mode == "replace" and width <= POINT_DIM + latent_dim:
            raise ParameterError("replace skip needs width > latent_dim + 3")
        self.name = name
        self.latent_dim = latent_dim
        self.width = width
        self.n_layers = n_layers
        self.skip_layer = skip_layer if skip_mode != "none" else None
        self.skip_mode: SkipMode = skip_mode if skip_layer is not None else "none"
        self.dropout = dropout
        self.specs = layer_specs(latent_dim, width, n_layers, self.skip_layer, self.skip_mode)
        self.params: Dict[str, Tensor] = {}

    @property
    def input_dim(self) -> int:
        return POINT_DIM + self.latent_dim

    def key(self, i: int, kind: str) -> str:
        return f"{self.name}.{i}.{kind}"

    def initialize(self, rng: np.random.Generator) -> None:
        """Kaiming-uniform weights (ReLU gain), zero biases."""
        dtype = default_dtype()
        for i, spec in enumerate(self.specs):
            bound = np.sqrt(6.0 / spec.fan_in)
            w = rng.uniform(-bound, bound, size=(spec.fan_in, spec.fan_out)).astype(dtype)
            self.params[self.key(i, "weight")] = Tensor(w, requires_grad=True, name=self.key(i, "weight"))
            self.params[self.key(i, "bias")] = Tensor(np.zeros(spec.fan_out, dtype=dtype), requires_grad=True, name=self.key(i, "bias"))

    def forward(self, inputs: Tensor, training: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
        """``inputs`` [N, 3 + d] -> occupancy [N, 1]."""
        if inputs.data.ndim != 2 or inputs.shape[1] != self.input_dim:
            raise DimensionError(f"{self.name}: expected inputs [N, {self.input_dim}], got {inputs.shape}")
        h = inputs
        last = self.n_layers - 1
        for i in range(self.n_layers):
            try:
                if self.skip_layer is not None and i == self.skip_layer:
                    h = ops.concat(h, inputs, axis=1)
                h = ops.linear(h, self.params[self.key(i, "weight")], self.params[self.key(i, "bias")])
                if i == last:
                    h = ops.sigmoid(h)
                else:
                    h = ops.relu(h)
                    if self.dropout > 0:
                        h = ops.dropout(h, self.dropout, training, rng)
            except NumericError as exc:
                raise NumericError(f"{self.name} layer {i}: {exc}") from exc
        return h

    def count_params(self) -> int:
        return int(sum(s.fan_in * s.fan_out + s.fan_out for s in self.specs))

    def count_macs(self) -> int:
        """Multiply-adds per query point."""
        return int(sum(s.fan_in * s.fan_out for s in self.specs))


@dataclass
class OccupancyPrediction:
    o_c: Tensor
    o_b: Tensor
    o_f: Tensor
    o_r: Tensor

    def numpy(self) -> Dict[str, np.ndarray]:
        return {k: getattr(self, k).data.reshape(-1) for k in ("o_c", "o_b", "o_f", "o_r")}


def compose(o_c: Tensor, o_b: Tensor) -> OccupancyPrediction:
    o_f = ops.mul(o_c, o_b)
    o_r = ops.mul(o_c, ops.sub(1.0, o_b))
    return OccupancyPrediction(o_c=o_c, o_b=o_b, o_f=o_f, o_r=o_r)


class RestorationModel:
    """Parameters θ1 (complete decoder) and θ2 (break decoder)."""

    def __init__(self, config: ModelConfig) -> None:
        self.config = config
        self.complete = OccupancyDecoder(
            "complete",
            config.latent_dim_c,
            config.hidden_width,
            config.n_layers,
            skip_layer=config.skip_layer,
            skip_mode=config.skip_mode,
            dropout=config.dropout,
        )
        self.brk = OccupancyDecoder(
            "break",
            config.latent_dim_b,
            config.hidden_width,
            config.n_layers,
            skip_layer=None,
            skip_mode="none",
            dropout=config.dropout,
        )

    @property
    def decoders(self) -> Tuple[OccupancyDecoder, OccupancyDecoder]:
        return self.complete, self.brk

    def parameters(self) -> Dict[str, Tensor]:
        """All network parameters in layer order (complete decoder first)."""
        out: Dict[str, Tensor] = {}
        for decoder in self.decoders:
            for i in range(decoder.n_layers):
                for kind in ("weight", "bias"):
                    key = decoder.key(i, kind)
                    out[key] = decoder.params[key]
        return out

    def count_params(self) -> int:
        return self.complete.count_params() + self.brk.count_params()

    def count_macs(self) -> int:
        return self.complete.count_macs() + self.brk.count_macs()

    def set_requires_grad(self, flag: bool) -> None:
        for p in self.parameters().values():
            p.requires_grad = flag
            p.grad = None

    def clone(self, requires_grad: bool = True) -> "RestorationModel":
        twin = RestorationModel(self.config)
        for decoder, source in zip(twin.decoders, self.decoders):
            for key, p in source.params.items():
                decoder.params[key] = Tensor(p.data.copy(), requires_grad=requires_grad, name=key, dtype=p.data.dtype)
        return twin

    def predict(
        self,
        latents: LatentPair,
        points: np.ndarray,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> OccupancyPrediction:
        return self.predict_batch([latents], [points], training, rng)

    def predict_batch(
        self,
        latents: Sequence[LatentPair],
        point_sets: Sequence[np.ndarray],
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> OccupancyPrediction:
        """One forward pass over several instances' points stacked row-wise."""
        if len(latents) != len(point_sets) or not latents:
            raise DimensionError("need one non-empty point set per latent pair")
        x_c, x_b = [], []
        for pair, pts in zip(latents, point_sets):
            x = Tensor(np.asarray(pts).reshape(-1, POINT_DIM))
            x_c.append(ops.concat(x, ops.repeat_rows(pair.z_c, x.shape[0]), axis=1))
            x_b.append(ops.concat(x, ops.repeat_rows(pair.z_b, x.shape[0]), axis=1))
        inputs_c = x_c[0] if len(x_c) == 1 else ops.concat(*x_c, axis=0)
        inputs_b = x_b[0] if len(x_b) == 1 else ops.concat(*x_b, axis=0)
        o_c = self.complete.forward(inputs_c, training, rng)
        o_b = self.brk.forward(inputs_b, training, rng)
        return compose(o_c, o_b)

    def evaluate(self, latents: LatentPair, points: np.ndarray, chunk: int = 1 << 15) -> Dict[str, np.ndarray]:
        """Eval-mode occupancies for many points, without recording gradients."""
        points = np.asarray(points).reshape(-1, POINT_DIM)
        if active_tape() is not None:
            raise ParameterError("evaluate must not run while a tape is recording")
        parts: Dict[str, List[np.ndarray]] = {"o_c": [], "o_b": [], "o_f": [], "o_r": []}
        for start in range(0, len(points), chunk):
            pred = self.predict(latents, points[start : start + chunk]).numpy()
            for k in parts:
                parts[k].append(pred[k])
        return {k: np.concatenate(v) if v else np.zeros(0) for k, v in parts.items()}


def init_model(d_c: int, d_b: int, rng_seed: int, config: Optional[ModelConfig] = None) -> RestorationModel:
    """Fresh model; every layer draws from its own named substream of ``rng_seed``."""
    if d_c < 1 or d_b < 1:
        raise ParameterError("latent dimensions must be >= 1")
    base = config or ModelConfig()
    config = base.model_copy(update={"latent_dim_c": d_c, "latent_dim_b": d_b})
    model = RestorationModel(config)
    for decoder in model.decoders:
        decoder.initialize(substream(rng_seed, "init", decoder.name))
    return model


def param_groups(
    model: RestorationModel,
    latents: Dict[str, LatentPair],
    lr_net: float = 5e-4,
    lr_latent: float = 1e-3,
    *,
    freeze_network: bool = False,
) -> List[ParamGroup]:
    latent_params: Dict[str, Tensor] = {}
    for iid in sorted(latents):
        latent_params.update(latents[iid].params())
    return [
        ParamGroup("network", model.parameters(), lr_net, frozen=freeze_network),
        ParamGroup("latents", latent_params, lr_latent),
    ]
