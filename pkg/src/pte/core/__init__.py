from pte.core.chunks import ActionChunk, ChunkBuffer, EnsembleConfig, as_action
from pte.core.ensemble import (
    ensemble_action,
    proleptic_column,
    push_chunk,
    weight_vector,
    weighted_average,
)
from pte.core.pose import (
    ArmPose,
    PoseCommand,
    euler_to_matrix,
    feature_to_pose,
    matrix_to_euler,
    pose_to_feature,
)

__all__ = [
    "ActionChunk",
    "ArmPose",
    "ChunkBuffer",
    "EnsembleConfig",
    "PoseCommand",
    "as_action",
    "ensemble_action",
    "euler_to_matrix",
    "feature_to_pose",
    "matrix_to_euler",
    "pose_to_feature",
    "proleptic_column",
    "push_chunk",
    "weight_vector",
    "weighted_average",
]
