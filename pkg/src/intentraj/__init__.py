"""Intention-aware pedestrian trajectory prediction toolkit.

A particle filter over goal-region hypotheses (with genetic-style intention
mutation) estimates where a pedestrian is heading, while a motion model
turns each hypothesis into a trajectory sample. Two motion models ship with
the package: a straight-line intention-aware model and a bidirectional
recurrent network trained to warp that straight line with learned offsets.
"""

from intentraj.core import (
    GoalRegion,
    IntentionMap,
    Position,
    Trajectory,
    average_step_length,
    region_contains,
    segment_distance,
)
from intentraj.data import (
    SynthConfig,
    TrajectoryRecord,
    build_boundary_map,
    generate_synthetic,
    load_corpus,
    load_map,
    load_trajectories,
    save_corpus,
    save_map,
    split_corpus,
)
from intentraj.filtering import FilterConfig, IntentionFilter, run_filter_on_record
from intentraj.metrics import EvalReport, aoe, evaluate_run, foe, iea, moe, nll
from intentraj.motion import (
    LinearMotionModel,
    MotionModel,
    ilm_predict,
    predict_with_intention,
    sample_goal_position,
    time_to_go,
)
from intentraj.warp import (
    ModelBank,
    TrainConfig,
    WarpModel,
    WarpMotionModel,
    load_bank,
    load_checkpoint,
    save_bank,
    save_checkpoint,
    train,
    warp_forward,
    warp_loss,
)

__version__ = "0.1.0"

__all__ = [
    "Position",
    "Trajectory",
    "GoalRegion",
    "IntentionMap",
    "segment_distance",
    "average_step_length",
    "region_contains",
    "TrajectoryRecord",
    "SynthConfig",
    "build_boundary_map",
    "generate_synthetic",
    "split_corpus",
    "load_trajectories",
    "load_corpus",
    "save_corpus",
    "load_map",
    "save_map",
    "MotionModel",
    "LinearMotionModel",
    "ilm_predict",
    "time_to_go",
    "sample_goal_position",
    "predict_with_intention",
    "WarpModel",
    "WarpMotionModel",
    "ModelBank",
    "TrainConfig",
    "train",
    "warp_forward",
    "warp_loss",
    "save_checkpoint",
    "load_checkpoint",
    "save_bank",
    "load_bank",
    "FilterConfig",
    "IntentionFilter",
    "run_filter_on_record",
    "aoe",
    "foe",
    "moe",
    "nll",
    "iea",
    "evaluate_run",
    "EvalReport",
    "__version__",
]
