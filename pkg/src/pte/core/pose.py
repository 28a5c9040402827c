"""Dual-arm pose commands and their 26-value feature encoding.

Per arm the feature carries position (3), the three columns of the rotation
matrix (9) and the grip (1); right arm first. Euler angles are
``(roll, pitch, yaw)`` applied as intrinsic Z-Y-X, i.e.
``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from pte.errors import DecodeError, InvalidArgument, ShapeError

FEATURE_DOF = 26
ARM_DOF = 13


def _vec3(values, name):
    arr = np.array(values, dtype=np.float64).reshape(-1)
    if arr.shape != (3,):
        raise ShapeError(f"{name} must have 3 entries, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True, eq=False)
class ArmPose:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    euler: np.ndarray = field(default_factory=lambda: np.zeros(3))
    grip: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "position"))
        object.__setattr__(self, "euler", _vec3(self.euler, "euler"))
        if not math.isfinite(self.grip) or not 0.0 <= self.grip <= 1.0:
            raise InvalidArgument(f"grip must lie in [0, 1], got {self.grip!r}")

    def rotation(self) -> np.ndarray:
        return euler_to_matrix(self.euler)


@dataclass(frozen=True)
class PoseCommand:
    right: ArmPose
    left: ArmPose


def euler_to_matrix(euler) -> np.ndarray:
    roll, pitch, yaw = _vec3(euler, "euler")
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def matrix_to_euler(rot: np.ndarray) -> np.ndarray:
    """Inverse of :func:`euler_to_matrix` for a proper rotation.

    Yaw is taken first, then roll and pitch are read off ``Rz(-yaw) @ R``,
    which stays well conditioned at gimbal lock.
    """
    rot = np.asarray(rot, dtype=np.float64)
    yaw = math.atan2(rot[1, 0], rot[0, 0])
    cy, sy = math.cos(yaw), math.sin(yaw)
    m = np.array([[cy, sy, 0.0], [-sy, cy, 0.0], [0.0, 0.0, 1.0]]) @ rot
    pitch = math.atan2(-m[2, 0], m[0, 0])
    roll = math.atan2(-m[1, 2], m[1, 1])
    return np.array([roll, pitch, yaw])


def orthonormalize(i_col, j_col, k_hint=None) -> np.ndarray:
    """Gram-Schmidt on (i, j) with k = i x j; returns the rotation matrix."""
    i_col = np.asarray(i_col, dtype=np.float64)
    j_col = np.asarray(j_col, dtype=np.float64)
    ni = np.linalg.norm(i_col)
    if ni < 1e-3:
        raise DecodeError(f"degenerate i column (norm {ni:.3g})")
    i_u = i_col / ni
    j_perp = j_col - (i_u @ j_col) * i_u
    nj = np.linalg.norm(j_perp)
    if nj < 1e-3:
        raise DecodeError(f"degenerate j column (norm {nj:.3g})")
    j_u = j_perp / nj
    k_u = np.cross(i_u, j_u)
    if k_hint is not None:
        k_hint = np.asarray(k_hint, dtype=np.float64)
        if np.linalg.norm(k_hint) < 1e-3:
            raise DecodeError("degenerate k column")
        if k_hint @ k_u <= 0:
            raise DecodeError("columns form a reflection, not a rotation")
    return np.column_stack([i_u, j_u, k_u])


def _encode_arm(arm: ArmPose) -> list[np.ndarray]:
    rot = arm.rotation()
    return [arm.position, rot[:, 0], rot[:, 1], rot[:, 2], np.array([arm.grip])]


def pose_to_feature(cmd: PoseCommand) -> np.ndarray:
    return np.concatenate(_encode_arm(cmd.right) + _encode_arm(cmd.left))


def _decode_arm(chunk: np.ndarray) -> ArmPose:
    rot = orthonormalize(chunk[3:6], chunk[6:9], chunk[9:12])
    grip = float(np.clip(chunk[12], 0.0, 1.0))
    return ArmPose(chunk[0:3], matrix_to_euler(rot), grip)


def feature_to_pose(v) -> PoseCommand:
    arr = np.asarray(v, dtype=np.float64).reshape(-1)
    if arr.shape[0] != FEATURE_DOF:
        raise ShapeError(f"pose feature must have {FEATURE_DOF} entries, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise DecodeError("pose feature contains non-finite values")
    return PoseCommand(right=_decode_arm(arr[:ARM_DOF]), left=_decode_arm(arr[ARM_DOF:]))
