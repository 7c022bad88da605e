# core/schemas/__init__.py

# Version of the persisted formats and configuration documents.
__version__ = "2.0.0"

# Re-export so callers can write `from core.schemas import RunConfig`.
from .config import (
    Band,
    BAND_BOUNDS,
    ShapeClass,
    BreakKind,
    DataConfig,
    ModelConfig,
    TrainConfig,
    InferenceConfig,
    TTTConfig,
    EvalConfig,
    AblationConfig,
    RunConfig,
)
from .contracts import (
    DATASET_FORMAT_VERSION,
    CHECKPOINT_FORMAT_VERSION,
    RESULT_FORMAT_VERSION,
    Split,
    MethodTag,
    StageStatus,
    ShapeParams,
    BreakDescriptor,
    InstanceRecord,
    DatasetManifest,
    LayoutEntry,
    EpochLosses,
    TrainProgress,
    CheckpointMeta,
    LossBreakdown,
    InstanceResult,
    EvalRecord,
    StageTask,
    StageResult,
)

__all__ = [
    "__version__",
    "Band",
    "BAND_BOUNDS",
    "ShapeClass",
    "BreakKind",
    "DataConfig",
    "ModelConfig",
    "TrainConfig",
    "InferenceConfig",
    "TTTConfig",
    "EvalConfig",
    "AblationConfig",
    "RunConfig",
    "DATASET_FORMAT_VERSION",
    "CHECKPOINT_FORMAT_VERSION",
    "RESULT_FORMAT_VERSION",
    "Split",
    "MethodTag",
    "StageStatus",
    "ShapeParams",
    "BreakDescriptor",
    "InstanceRecord",
    "DatasetManifest",
    "LayoutEntry",
    "EpochLosses",
    "TrainProgress",
    "CheckpointMeta",
    "LossBreakdown",
    "InstanceResult",
    "EvalRecord",
    "StageTask",
    "StageResult",
]
