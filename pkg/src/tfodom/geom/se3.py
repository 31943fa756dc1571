"""Rigid transforms, se(3) exp/log, pose algebra and window accumulation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rotations import matrix_to_rotvec, rotation_angle, skew

__all__ = ["PoseSE3", "Twist", "se3_exp", "se3_log", "pose_algebra", "f2f_to_f2g"]

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class Twist:
    """se(3) element: translational part rho, rotational part phi (rotation vector)."""
    rho: np.ndarray
    phi: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.rho, self.phi])

    @staticmethod
    def from_array(xi) -> "Twist":
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (6,):
            raise ValueError(f"Twist.from_array: expected 6 components, got shape {xi.shape}")
        return Twist(xi[:3].copy(), xi[3:].copy())


@dataclass(frozen=True)
class PoseSE3:
    """Rigid transform: 3x3 rotation and translation in meters."""
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if r.shape != (3, 3):
            raise ValueError(f"PoseSE3: rotation must be 3x3, got {r.shape}")
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-6:
            raise ValueError("PoseSE3: rotation is not orthonormal")
        if np.linalg.det(r) < 0:
            raise ValueError("PoseSE3: rotation has negative determinant")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "PoseSE3":
        return PoseSE3()

    @staticmethod
    def from_matrix(m) -> "PoseSE3":
        m = np.asarray(m, dtype=float)
        if m.shape == (4, 4):
            return PoseSE3(m[:3, :3], m[:3, 3])
        if m.shape == (3, 4):
            return PoseSE3(m[:, :3], m[:, 3])
        raise ValueError(f"PoseSE3.from_matrix: expected 3x4 or 4x4, got {m.shape}")

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "PoseSE3") -> "PoseSE3":
        return PoseSE3(self.rotation @ other.rotation,
                       self.rotation @ other.translation + self.translation)

    def inverse(self) -> "PoseSE3":
        rt = self.rotation.T
        return PoseSE3(rt, -rt @ self.translation)

    def relative(self, other: "PoseSE3") -> "PoseSE3":
        """self^-1 * other."""
        return self.inverse().compose(other)

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation


def pose_algebra(a: PoseSE3, b: PoseSE3 | None, kind: str) -> PoseSE3:
    """compose: a*b; inverse: a^-1 (b ignored); relative: a^-1 * b."""
    if kind == "compose":
        return a.compose(b)
    if kind == "inverse":
        return a.inverse()
    if kind == "relative":
        return a.relative(b)
    raise ValueError(f"pose_algebra: unknown kind {kind!r}")


def _so3_coeffs(theta: float) -> tuple[float, float, float]:
    """(A, B, C) = (sin/theta, (1-cos)/theta^2, (theta-sin)/theta^3)."""
    if theta < 1e-8:
        t2 = theta * theta
        return 1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0
    t2 = theta * theta
    return (np.sin(theta) / theta,
            (1.0 - np.cos(theta)) / t2,
            (theta - np.sin(theta)) / (t2 * theta))


def se3_exp(xi) -> PoseSE3:
    """Closed-form exponential: Rodrigues rotation, left-Jacobian translation."""
    if isinstance(xi, Twist):
        rho, phi = xi.rho, xi.phi
    else:
        xi = np.asarray(xi, dtype=float)
        rho, phi = xi[:3], xi[3:]
    if not (np.isfinite(rho).all() and np.isfinite(phi).all()):
        raise ValueError("se3_exp: non-finite twist")
    theta = float(np.linalg.norm(phi))
    a, b, c = _so3_coeffs(theta)
    k = skew(phi)
    k2 = k @ k
    r = np.eye(3) + a * k + b * k2
    v = np.eye(3) + b * k + c * k2
    return PoseSE3(r, v @ rho)


def se3_log(pose: PoseSE3) -> Twist:
    """Inverse of se3_exp; valid for rotation angle below pi."""
    angle = rotation_angle(pose.rotation)
    if angle > np.pi - 1e-6:
        raise ValueError(
            f"se3_log: rotation angle {angle:.6f} is at or near pi; "
            "extract the rotation via the quaternion path instead")
    phi = matrix_to_rotvec(pose.rotation)
    theta = float(np.linalg.norm(phi))
    k = skew(phi)
    k2 = k @ k
    if theta < 1e-8:
        coeff = 1.0 / 12.0 + theta * theta / 720.0
    else:
        a, b, _ = _so3_coeffs(theta)
        coeff = (1.0 - a / (2.0 * b)) / (theta * theta)
    v_inv = np.eye(3) - 0.5 * k + coeff * k2
    return Twist(v_inv @ pose.translation, phi)


def f2f_to_f2g(relatives: list[PoseSE3]) -> list[PoseSE3]:
    """Accumulate frame-to-frame transforms into poses anchored at the
    window-initial frame: out[0] = I, out[k] = out[k-1] * relatives[k-1]."""
    out = [PoseSE3.identity()]
    for rel in relatives:
        out.append(out[-1].compose(rel))
    return out
