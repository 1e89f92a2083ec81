"""blockcast: long-horizon forecasting by block-wise recursive rollout.

A fixed-window model mapping T input steps to L output steps is iterated
to reach any evaluation horizon H, decoupling the architectural output
horizon from the scoring horizon. The package bundles the data pipeline,
trainable linear/MLP forecasters with exact segment gradients, the rollout
engine, a per-segment gradient-conflict analyzer, and a sweep harness.
"""

__version__ = "0.1.0"

from .data import (
    ColumnSchema,
    SeriesFrame,
    SplitFrames,
    SplitSpec,
    StandardizeStats,
    WindowSample,
    apply_standardize,
    chronological_split,
    fit_standardize,
    invert_standardize,
    iter_windows,
    load_csv,
    window_count,
)
from .evaluation import (
    EvalConfig,
    EvalRecord,
    SweepResult,
    WinComparison,
    WinSummary,
    evaluate,
    extreme_horizon_eval,
    sweep,
    win_ratio,
)
from .gradients import (
    GradSnapshot,
    GradStats,
    SegmentPartition,
    analyze_training,
    cosine_sim,
    default_partition,
    norm_ratio,
)
from .models import (
    ForecasterSpec,
    ParamVector,
    SegmentSpec,
    build,
    from_checkpoint,
    load_checkpoint,
    save_checkpoint,
    to_checkpoint,
)
from .rollout import (
    Phase,
    RolloutConfig,
    RolloutTrace,
    build_block_input,
    phase_of,
    rollout,
    teacher_forced_input,
)
from .training import AdamState, TrainConfig, TrainHistory, adam_step, train

__all__ = [
    "__version__",
    "ColumnSchema", "SeriesFrame", "SplitFrames", "SplitSpec", "StandardizeStats",
    "WindowSample", "apply_standardize", "chronological_split", "fit_standardize",
    "invert_standardize", "iter_windows", "load_csv", "window_count",
    "EvalConfig", "EvalRecord", "SweepResult", "WinComparison", "WinSummary",
    "evaluate", "extreme_horizon_eval", "sweep", "win_ratio",
    "GradSnapshot", "GradStats", "SegmentPartition", "analyze_training",
    "cosine_sim", "default_partition", "norm_ratio",
    "ForecasterSpec", "ParamVector", "SegmentSpec", "build", "from_checkpoint",
    "load_checkpoint", "save_checkpoint", "to_checkpoint",
    "Phase", "RolloutConfig", "RolloutTrace", "build_block_input", "phase_of",
    "rollout", "teacher_forced_input",
    "AdamState", "TrainConfig", "TrainHistory", "adam_step", "train",
]
