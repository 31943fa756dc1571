"""Rotation representations, se(3)/SE(3) maps, pose algebra, and
frame-to-frame -> frame-to-global accumulation."""

from .rotations import (
    Euler, Quaternion, AxisAngle, GIMBAL_EPS,
    euler_to_matrix, matrix_to_euler, quat_to_matrix, matrix_to_quat,
    rotvec_to_matrix, matrix_to_rotvec, canonicalize_quat,
    rot_convert, skew, unskew, random_rotation, rotation_angle,
)
from .se3 import PoseSE3, Twist, se3_exp, se3_log, pose_algebra, f2f_to_f2g

__all__ = [
    "Euler", "Quaternion", "AxisAngle", "GIMBAL_EPS",
    "euler_to_matrix", "matrix_to_euler", "quat_to_matrix", "matrix_to_quat",
    "rotvec_to_matrix", "matrix_to_rotvec", "canonicalize_quat",
    "rot_convert", "skew", "unskew", "random_rotation", "rotation_angle",
    "PoseSE3", "Twist", "se3_exp", "se3_log", "pose_algebra", "f2f_to_f2g",
]
