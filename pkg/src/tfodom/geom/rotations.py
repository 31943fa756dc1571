"""Rotation representations and conversions.

Conventions, fixed across the package:

* Euler angles are intrinsic XYZ (roll about x, pitch about the new y,
  yaw about the new z): ``R = Rx(roll) @ Ry(pitch) @ Rz(yaw)``, with
  pitch extracted into [-pi/2, pi/2].
* Quaternions are (w, x, y, z), unit norm, canonical sign w >= 0.
* Axis-angle is a rotation vector (axis scaled by angle in radians);
  the so(3) part of a twist uses the identical encoding.

All conversions go through the rotation matrix as the canonical
intermediate. At gimbal lock (|pitch| within 1e-6 of pi/2) the Euler
extraction is flagged degenerate: roll absorbs the free angle and yaw
is set to zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Euler", "Quaternion", "AxisAngle", "GIMBAL_EPS",
    "euler_to_matrix", "matrix_to_euler",
    "quat_to_matrix", "matrix_to_quat",
    "rotvec_to_matrix", "matrix_to_rotvec", "canonicalize_quat",
    "rot_convert", "skew", "unskew", "random_rotation", "rotation_angle",
]

GIMBAL_EPS = 1e-6


@dataclass(frozen=True)
class Euler:
    roll: float
    pitch: float
    yaw: float
    degenerate: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([self.roll, self.pitch, self.yaw])


@dataclass(frozen=True)
class Quaternion:
    w: float
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])


@dataclass(frozen=True)
class AxisAngle:
    """Rotation vector: unit axis scaled by the angle."""
    vec: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.asarray(self.vec, dtype=float)


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def unskew(m: np.ndarray) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def euler_to_matrix(euler) -> np.ndarray:
    if isinstance(euler, Euler):
        roll, pitch, yaw = euler.roll, euler.pitch, euler.yaw
    else:
        roll, pitch, yaw = np.asarray(euler, dtype=float)
    ca, sa = np.cos(roll), np.sin(roll)
    cb, sb = np.cos(pitch), np.sin(pitch)
    cc, sc = np.cos(yaw), np.sin(yaw)
    rx = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])
    ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    rz = np.array([[cc, -sc, 0], [sc, cc, 0], [0, 0, 1]])
    return rx @ ry @ rz


def matrix_to_euler(r: np.ndarray) -> Euler:
    r = np.asarray(r, dtype=float)
    s = float(np.clip(r[0, 2], -1.0, 1.0))
    if 1.0 - abs(s) < GIMBAL_EPS:
        # pitch at +-pi/2: only roll -+ yaw is observable; put it all in roll
        pitch = np.pi / 2 if s > 0 else -np.pi / 2
        roll = float(np.arctan2(r[1, 0], r[1, 1]))
        return Euler(roll, pitch, 0.0, degenerate=True)
    pitch = float(np.arcsin(s))
    roll = float(np.arctan2(-r[1, 2], r[2, 2]))
    yaw = float(np.arctan2(-r[0, 1], r[0, 0]))
    return Euler(roll, pitch, yaw)


def quat_to_matrix(q) -> np.ndarray:
    if isinstance(q, Quaternion):
        w, x, y, z = q.w, q.x, q.y, q.z
    else:
        w, x, y, z = np.asarray(q, dtype=float)
    n = w * w + x * x + y * y + z * z
    if n < 1e-12:
        raise ValueError("quat_to_matrix: zero-norm quaternion")
    s = 2.0 / n
    wx, wy, wz = s * w * x, s * w * y, s * w * z
    xx, xy, xz = s * x * x, s * x * y, s * x * z
    yy, yz, zz = s * y * y, s * y * z, s * z * z
    return np.array([
        [1.0 - (yy + zz), xy - wz, xz + wy],
        [xy + wz, 1.0 - (xx + zz), yz - wx],
        [xz - wy, yz + wx, 1.0 - (xx + yy)],
    ])


def matrix_to_quat(r: np.ndarray) -> Quaternion:
    """Shepperd's method, numerically stable for all rotations."""
    r = np.asarray(r, dtype=float)
    tr = r[0, 0] + r[1, 1] + r[2, 2]
    if tr > 0:
        t = 1.0 + tr
        q = np.array([t, r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    elif r[0, 0] >= r[1, 1] and r[0, 0] >= r[2, 2]:
        t = 1.0 + r[0, 0] - r[1, 1] - r[2, 2]
        q = np.array([r[2, 1] - r[1, 2], t, r[0, 1] + r[1, 0], r[0, 2] + r[2, 0]])
    elif r[1, 1] >= r[2, 2]:
        t = 1.0 + r[1, 1] - r[0, 0] - r[2, 2]
        q = np.array([r[0, 2] - r[2, 0], r[0, 1] + r[1, 0], t, r[1, 2] + r[2, 1]])
    else:
        t = 1.0 + r[2, 2] - r[0, 0] - r[1, 1]
        q = np.array([r[1, 0] - r[0, 1], r[0, 2] + r[2, 0], r[1, 2] + r[2, 1], t])
    q = q * (0.5 / np.sqrt(t))
    q = canonicalize_quat(q)
    return Quaternion(*q)


def canonicalize_quat(q: np.ndarray) -> np.ndarray:
    """Unit norm with w >= 0 (first nonzero component positive if w == 0)."""
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValueError("canonicalize_quat: zero-norm quaternion")
    q = q / n
    if q[0] < 0 or (q[0] == 0 and next((c for c in q if c != 0), 1.0) < 0):
        q = -q
    return q


def rotvec_to_matrix(v) -> np.ndarray:
    """Rodrigues formula with a Taylor branch below 1e-8 radians."""
    if isinstance(v, AxisAngle):
        v = v.vec
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v)
    k = skew(v)
    if theta < 1e-8:
        return np.eye(3) + k + 0.5 * (k @ k)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * k + b * (k @ k)


def matrix_to_rotvec(r: np.ndarray) -> np.ndarray:
    """Via the quaternion: stable for every angle below pi."""
    q = matrix_to_quat(r).as_array()
    w = q[0]
    s = np.linalg.norm(q[1:])
    if s < 1e-12:
        return 2.0 * q[1:] / max(w, 1e-12)
    angle = 2.0 * np.arctan2(s, w)
    return q[1:] * (angle / s)


def rotation_angle(r: np.ndarray) -> float:
    """Angle of a rotation matrix in radians."""
    tr = float(np.trace(np.asarray(r)))
    return float(np.arccos(np.clip(0.5 * (tr - 1.0), -1.0, 1.0)))


_KINDS = ("euler", "quaternion", "axis_angle", "matrix")


def rot_convert(rotation, target_kind: str):
    """Convert between representations through the matrix intermediate.

    ``rotation`` may be an Euler/Quaternion/AxisAngle instance, a 3x3
    array (matrix), a 3-vector (axis-angle) or 4-vector (quaternion).
    """
    if target_kind not in _KINDS:
        raise ValueError(f"rot_convert: unknown target kind {target_kind!r}")

    if isinstance(rotation, Euler):
        r = euler_to_matrix(rotation)
    elif isinstance(rotation, Quaternion):
        r = quat_to_matrix(rotation)
    elif isinstance(rotation, AxisAngle):
        r = rotvec_to_matrix(rotation)
    else:
        arr = np.asarray(rotation, dtype=float)
        if arr.shape == (3, 3):
            r = arr
        elif arr.shape == (4,):
            r = quat_to_matrix(arr)
        elif arr.shape == (3,):
            r = rotvec_to_matrix(arr)
        else:
            raise ValueError(f"rot_convert: cannot interpret input of shape {arr.shape}")

    if target_kind == "matrix":
        return r
    if target_kind == "euler":
        return matrix_to_euler(r)
    if target_kind == "quaternion":
        return matrix_to_quat(r)
    return AxisAngle(matrix_to_rotvec(r))


def random_rotation(rng: np.random.Generator, max_pitch: float = 1.4) -> np.ndarray:
    """Random rotation with bounded pitch (keeps Euler extraction regular)."""
    roll = rng.uniform(-np.pi, np.pi)
    pitch = rng.uniform(-max_pitch, max_pitch)
    yaw = rng.uniform(-np.pi, np.pi)
    return euler_to_matrix((roll, pitch, yaw))
