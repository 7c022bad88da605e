# config.py
# Description: Run configuration for the restoration pipeline. One RunConfig
# document (JSON) drives every CLI stage; sections mirror the pipeline stages.
# Unknown keys are rejected everywhere.

from __future__ import annotations

from enum import Enum
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class Band(Enum):
    """Removed-volume partiality bands."""
    LOW = "low"    # 5-20% removed
    HIGH = "high"  # 45-55% removed

    @property
    def bounds(self) -> Tuple[float, float]:
        return BAND_BOUNDS[self]


BAND_BOUNDS = {Band.LOW: (0.05, 0.20), Band.HIGH: (0.45, 0.55)}


class ShapeClass(Enum):
    BOXES = "boxes"
    BOTTLES = "bottles"
    MUGS = "mugs"
    OBJ = "obj"


class BreakKind(Enum):
    PLANE = "plane"
    ELLIPSOID = "ellipsoid"
    MIXED = "mixed"


class DataConfig(StrictModel):
    """Dataset generation: shape class, fracture band and point sampling."""
    class_name: ShapeClass = Field(default=ShapeClass.BOXES, description="Procedural shape family.")
    count: int = Field(default=240, ge=1, description="Instances per class.")
    band: Band = Field(default=Band.LOW, description="Removed-volume band.")
    jitter: float = Field(default=1.0, ge=0.0, le=1.0, description="Shape-parameter jitter; 0 yields the class prototype.")
    segments: int = Field(default=32, ge=3, description="Facets around lathed shapes.")
    margin: float = Field(default=0.05, ge=0.0, lt=0.5, description="Unit-cube normalization margin.")
    break_kind: BreakKind = Field(default=BreakKind.PLANE, description="Cut primitive.")
    fracture_mc_points: int = Field(default=200_000, ge=10_000, description="Monte Carlo points for removed-volume bisection.")
    n_uniform: int = Field(default=100_000, ge=0, description="Uniform samples per instance.")
    n_surface: int = Field(default=100_000, ge=0, description="Near-surface samples per instance.")
    surface_sigma: float = Field(default=0.01, ge=0.0, description="Gaussian jitter of near-surface samples.")
    max_skip_fraction: float = Field(default=0.10, ge=0.0, le=1.0, description="Generation fails when more instances are skipped.")
    obj_path: Optional[str] = Field(default=None, description="Single watertight OBJ used when class_name is 'obj'.")

    @model_validator(mode="after")
    def _check(self) -> "DataConfig":
        if self.n_uniform + self.n_surface < 1:
            raise ValueError("n_uniform + n_surface must be >= 1")
        if self.class_name is ShapeClass.OBJ and not self.obj_path:
            raise ValueError("class 'obj' needs data.obj_path")
        return self


class ModelConfig(StrictModel):
    """Twin decoder architecture."""
    latent_dim_c: int = Field(default=200, ge=1, description="Complete-shape latent size d_C.")
    latent_dim_b: int = Field(default=200, ge=1, description="Break-set latent size d_B.")
    hidden_width: int = Field(default=512, ge=1, description="Hidden layer width.")
    n_layers: int = Field(default=8, ge=2, description="Linear layers per decoder.")
    skip_layer: int = Field(default=4, ge=1, description="Skip input re-injected after this many layers.")
    skip_mode: Literal["concat", "replace", "none"] = Field(default="concat", description="Concatenate (widen), replace neurons at the skip, or no skip.")
    dropout: float = Field(default=0.2, ge=0.0, lt=1.0, description="Dropout rate on hidden layers (train mode only).")
    latent_sigma: float = Field(default=0.01, gt=0.0, description="Std of latent initialization.")

    @model_validator(mode="after")
    def _check(self) -> "ModelConfig":
        if self.skip_layer >= self.n_layers:
            raise ValueError("skip_layer must be smaller than n_layers")
        if self.skip_mode == "replace" and self.hidden_width <= self.latent_dim_c + 3:
            raise ValueError("replace skip needs hidden_width > latent_dim_c + 3")
        return self


class TrainConfig(StrictModel):
    """Joint optimization of decoders and training latents."""
    epochs: int = Field(default=2000, ge=0)
    instances_per_step: int = Field(default=8, ge=1)
    points_per_instance: int = Field(default=4096, ge=1)
    lr_net: float = Field(default=5e-4, gt=0.0)
    lr_latent: float = Field(default=1e-3, gt=0.0)
    val_period: int = Field(default=25, ge=1, description="Epochs between validation rounds.")
    patience: int = Field(default=10, ge=1, description="Validation rounds without improvement before stopping.")
    val_steps: int = Field(default=200, ge=0, description="Latent-inference steps during validation.")
    val_resolution: int = Field(default=64, ge=2)
    val_surface_samples: int = Field(default=5000, ge=1)
    iteration_budget: Optional[int] = Field(default=None, ge=0, description="Cap on optimizer steps; see fair_training_budget.")
    fairness_offset: bool = Field(default=False, description="Reduce the budget by the test-time training cost.")


class InferenceConfig(StrictModel):
    """Latent-only inference on the fractured input."""
    steps: int = Field(default=1500, ge=0)
    lr_latent: float = Field(default=1e-3, gt=0.0)
    lambda_nonempty: float = Field(default=1.0, ge=0.0)
    nonempty_margin: float = Field(default=0.01, ge=0.0)
    lambda_prox: float = Field(default=0.5, ge=0.0)
    prox_inflate: float = Field(default=0.1, ge=0.0)
    query_uniform: int = Field(default=8192, ge=0)
    query_surface: int = Field(default=8192, ge=0)
    query_sigma: float = Field(default=0.01, ge=0.0)
    heldout_points: int = Field(default=4096, ge=1)


class TTTConfig(StrictModel):
    """Test-time training of all weights."""
    epochs: int = Field(default=3000, ge=0, description="0 disables test-time training.")
    alpha: float = Field(default=0.1, ge=0.0)
    lr_net: float = Field(default=5e-4, gt=0.0)
    lr_latent: float = Field(default=1e-3, gt=0.0)
    tau: float = Field(default=0.5, gt=0.0, lt=1.0, description="Pseudo-label threshold on predicted o_C.")
    resample_per_epoch: bool = Field(default=False)
    points_per_epoch: int = Field(default=4096, ge=1, description="Subsample size when resample_per_epoch is set.")


class EvalConfig(StrictModel):
    resolution: int = Field(default=128, ge=2)
    surface_samples: int = Field(default=30_000, ge=1)
    curve_thresholds: int = Field(default=50, ge=2)
    outlier_ratio: float = Field(default=3.0, gt=0.0)


class AblationConfig(StrictModel):
    dims: List[int] = Field(default_factory=lambda: [100, 200, 400])


class RunConfig(StrictModel):
    """Top-level document loaded by the CLI."""
    seed: int = Field(default=0, ge=0)
    precision: Literal["float32", "float64"] = Field(default="float32")
    data: DataConfig = Field(default_factory=DataConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    infer: InferenceConfig = Field(default_factory=InferenceConfig)
    ttt: TTTConfig = Field(default_factory=TTTConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    ablate: AblationConfig = Field(default_factory=AblationConfig)
