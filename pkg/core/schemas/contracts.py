# contracts.py
# Version: 2.0.0
# Description: Persisted data contracts of the restoration pipeline. Every file
# a stage writes (dataset manifest, checkpoint metadata, per-instance results)
# and every unit of work handed to a stage worker MUST adhere to these schemas.
# Persisted documents carry no timestamps. The only measured values are the
# per-phase durations in InstanceResult.timings; they never reach report.csv,
# so identical inputs give byte-identical reports and checkpoint metadata.

from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Tuple
from uuid import UUID, uuid4

from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.schemas.config import Band, ModelConfig, ShapeClass

DATASET_FORMAT_VERSION = 1
CHECKPOINT_FORMAT_VERSION = 1
RESULT_FORMAT_VERSION = 1


class _Contract(BaseModel):
    model_config = ConfigDict(extra="forbid")


# --- Controlled Vocabularies (Enums) ---

class Split(Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class MethodTag(Enum):
    """Which restoration procedure produced a result."""
    INFERENCE_ONLY = "inference-only"  # latent-only inference, no test-time training
    WITH_TTT = "with-ttt"
    BASELINE = "baseline"


class StageStatus(Enum):
    SUCCESS = "SUCCESS"
    SKIPPED = "SKIPPED"  # inputs unchanged since the last run
    FAILURE = "FAILURE"


# --- Dataset ---

class ShapeParams(_Contract):
    """Enough to regenerate a complete shape and its exact occupancy oracle."""
    kind: ShapeClass
    values: Dict[str, float] = Field(default_factory=dict, description="Family parameters after jitter.")
    segments: int = Field(default=32, ge=3)
    margin: float = Field(default=0.05)
    source: Optional[str] = Field(None, description="OBJ path for ingested meshes.")


class BreakDescriptor(_Contract):
    """Analytic break set B; o_B = 1 on the kept (fractured) side."""
    kind: Literal["plane", "ellipsoid"]
    normal: Optional[List[float]] = Field(None, description="Plane normal; o_B = 1 where normal . x <= offset.")
    offset: Optional[float] = None
    center: Optional[List[float]] = Field(None, description="Ellipsoid centre; o_B = 1 outside the ellipsoid.")
    axes: Optional[List[float]] = Field(None, description="Ellipsoid semi-axes.")
    rotation: Optional[List[List[float]]] = Field(None, description="Ellipsoid orientation, rows are principal axes.")

    @model_validator(mode="after")
    def _check(self) -> "BreakDescriptor":
        if self.kind == "plane" and (self.normal is None or self.offset is None):
            raise ValueError("plane break needs normal and offset")
        if self.kind == "ellipsoid" and (self.center is None or self.axes is None or self.rotation is None):
            raise ValueError("ellipsoid break needs center, axes and rotation")
        return self


class InstanceRecord(_Contract):
    instance_id: str
    file: str = Field(..., description="Sample file relative to the dataset directory.")
    split: Split
    measured_fraction: float = Field(..., ge=0.0, le=1.0, description="Removed volume / complete volume.")
    fraction_stderr: float = Field(..., ge=0.0)
    n_records: int = Field(..., ge=1)
    shape: ShapeParams
    break_set: BreakDescriptor


class DatasetManifest(_Contract):
    format_version: int = DATASET_FORMAT_VERSION
    name: str
    class_name: ShapeClass
    band: Band
    band_bounds: Tuple[float, float]
    seed: int
    splits: Dict[Split, List[str]]
    instances: List[InstanceRecord]
    skipped: List[str] = Field(default_factory=list, description="Instances whose fracture never reached the band.")

    @model_validator(mode="after")
    def _check_splits(self) -> "DatasetManifest":
        seen: Dict[str, Split] = {}
        for split, ids in self.splits.items():
            for iid in ids:
                if iid in seen:
                    raise ValueError(f"instance {iid} appears in splits {seen[iid].value} and {split.value}")
                seen[iid] = split
        listed = {r.instance_id for r in self.instances}
        if set(seen) != listed:
            raise ValueError("splits must cover every instance exactly once")
        for record in self.instances:
            if seen[record.instance_id] is not record.split:
                raise ValueError(f"instance {record.instance_id} split mismatch")
        return self

    def records(self, split: Optional[Split] = None) -> List[InstanceRecord]:
        if split is None:
            return list(self.instances)
        return [r for r in self.instances if r.split is split]

    def record(self, instance_id: str) -> InstanceRecord:
        for r in self.instances:
            if r.instance_id == instance_id:
                return r
        raise KeyError(instance_id)


# --- Checkpoints ---

class LayoutEntry(_Contract):
    name: str
    shape: List[int]
    offset: int = Field(..., ge=0, description="Element offset into params.bin.")


class EpochLosses(_Contract):
    epoch: int
    l_c: float
    l_b: float
    l_f: float
    l_r: float
    total: float
    val_cd: Optional[float] = None
    wall_seconds: float = Field(0.0, description="Not persisted in checkpoint.json.", exclude=True)


class TrainProgress(_Contract):
    epoch: int = 0
    steps: int = 0
    best_val_cd: Optional[float] = None
    best_epoch: Optional[int] = None
    rounds_since_best: int = 0
    stopped_early: bool = False


class CheckpointMeta(_Contract):
    format_version: int = CHECKPOINT_FORMAT_VERSION
    model: ModelConfig
    dtype: Literal["float32", "float64"] = "float32"
    seed: int
    layout: List[LayoutEntry]
    latent_ids: List[str]
    progress: TrainProgress = Field(default_factory=TrainProgress)
    history: List[EpochLosses] = Field(default_factory=list)
    has_optimizer: bool = False
    optimizer_layout: List[LayoutEntry] = Field(default_factory=list, description="Adam moments in optimizer.bin.")
    optimizer_counters: Dict[str, Dict[str, Any]] = Field(default_factory=dict, description="Per-group step counters and learning rates.")


# --- Results ---

class LossBreakdown(_Contract):
    l_f: float
    l_reg: float = 0.0
    l_r: Optional[float] = None
    total: float


class InstanceResult(_Contract):
    format_version: int = RESULT_FORMAT_VERSION
    instance_id: str
    class_name: str
    method: MethodTag
    seed: int
    cd_complete: float = Field(..., ge=0.0)
    cd_restoration: Optional[float] = Field(None, ge=0.0)
    inference: LossBreakdown
    ttt: Optional[LossBreakdown] = None
    l_f_pre_ttt: float
    l_f_post_ttt: float
    heldout_l_f_pre: float
    heldout_l_f_post: float
    pseudo_restoration_points: int = 0
    meshes: Dict[str, str] = Field(default_factory=dict)
    timings: Dict[str, float] = Field(default_factory=dict)


class EvalRecord(_Contract):
    instance_id: str
    class_name: str
    method: MethodTag
    cd: float = Field(..., ge=0.0, description="Chamfer distance, unit-cube scale.")
    cd_restoration: Optional[float] = Field(None, ge=0.0)
    wall_seconds: float = 0.0


# --- Stage work units ---

class StageTask(_Contract):
    """A unit of work handed to a stage worker."""
    task_id: UUID = Field(default_factory=uuid4)
    stage: str
    key: str = Field(..., description="Instance id or other per-task key.")
    context: Dict[str, Any] = Field(default_factory=dict)


class StageResult(_Contract):
    task_id: UUID
    key: str
    status: StageStatus
    log_output: str = ""
    artifacts_path: Optional[str] = None
    payload: Any = Field(None, exclude=True)
