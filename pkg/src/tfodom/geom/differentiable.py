"""Rotation and rigid-transform math on autodiff tensors.

Mirrors the numpy routines in :mod:`tfodom.geom.rotations` /
:mod:`tfodom.geom.se3` but runs on :class:`tfodom.diffcore.Tensor` so
gradients can flow from pose residuals (including window-composed
global poses) back into the regression heads.

All functions take a batch leading axis: rotation vectors are [P, 3],
matrices [P, 3, 3]. Small-angle regimes use series in theta^2 selected
per element, so nothing differentiates a sqrt at zero. Inputs whose
rotation angle approaches pi are outside the supported range (the
windowed relative motions this package trains on are far below that).
"""

from __future__ import annotations

import numpy as np

from .. import diffcore as dc
from ..diffcore import Tensor

__all__ = [
    "skew_t", "euler_to_matrix_t", "rotvec_to_matrix_t", "quat_to_matrix_t",
    "matrix_to_euler_t", "matrix_to_rotvec_t", "matrix_to_quat_t",
    "left_jacobian_t", "left_jacobian_inv_t", "canonical_quat_t",
    "compose_chain_t",
]

_SMALL_T2 = 1e-6  # theta^2 threshold for series branches (theta < 1e-3)


def _coef_to_mat(coef: Tensor, p: int) -> Tensor:
    """[P] -> [P,3,3] with the scalar repeated (for per-batch matrix scaling)."""
    rep = dc.stack([coef] * 9, axis=1)
    return dc.reshape(rep, (p, 3, 3))


def _safe(values: Tensor, mask: np.ndarray) -> Tensor:
    """Replace masked entries by 1.0 so the closed-form branch stays finite."""
    return dc.where(mask, dc.as_tensor(np.ones_like(values.data)), values)


def skew_t(v: Tensor) -> Tensor:
    p = v.shape[0]
    x, y, z = v[:, 0], v[:, 1], v[:, 2]
    zero = dc.scale(x, 0.0)
    rows = dc.stack([zero, dc.neg(z), y, z, zero, dc.neg(x), dc.neg(y), x, zero], axis=1)
    return dc.reshape(rows, (p, 3, 3))


def _eye(p: int, like: Tensor) -> Tensor:
    return dc.as_tensor(np.broadcast_to(np.eye(3, dtype=like.data.dtype), (p, 3, 3)).copy())


def euler_to_matrix_t(e: Tensor) -> Tensor:
    """Intrinsic XYZ Euler angles [P,3] -> rotation matrices [P,3,3]."""
    p = e.shape[0]
    roll, pitch, yaw = e[:, 0], e[:, 1], e[:, 2]
    ca, sa = dc.cos(roll), dc.sin(roll)
    cb, sb = dc.cos(pitch), dc.sin(pitch)
    cc, sc = dc.cos(yaw), dc.sin(yaw)
    one = dc.add(dc.scale(roll, 0.0), 1.0)
    zero = dc.scale(roll, 0.0)
    rx = dc.reshape(dc.stack([one, zero, zero, zero, ca, dc.neg(sa), zero, sa, ca], axis=1), (p, 3, 3))
    ry = dc.reshape(dc.stack([cb, zero, sb, zero, one, zero, dc.neg(sb), zero, cb], axis=1), (p, 3, 3))
    rz = dc.reshape(dc.stack([cc, dc.neg(sc), zero, sc, cc, zero, zero, zero, one], axis=1), (p, 3, 3))
    return dc.matmul(dc.matmul(rx, ry), rz)


def _rodrigues_coeffs(t2: Tensor):
    """(A, B) with A = sin(t)/t and B = (1-cos(t))/t^2, series below _SMALL_T2."""
    small = t2.data < _SMALL_T2
    t2_safe = _safe(t2, small)
    theta = dc.sqrt(t2_safe)
    a_closed = dc.div(dc.sin(theta), theta)
    b_closed = dc.div(dc.sub(1.0, dc.cos(theta)), t2_safe)
    a_series = dc.add(dc.scale(t2, -1.0 / 6.0), 1.0)
    b_series = dc.add(dc.scale(t2, -1.0 / 24.0), 0.5)
    return dc.where(small, a_series, a_closed), dc.where(small, b_series, b_closed)


def rotvec_to_matrix_t(v: Tensor) -> Tensor:
    """Rodrigues formula on rotation vectors [P,3]."""
    p = v.shape[0]
    t2 = dc.sum(dc.square(v), axis=1)
    a, b = _rodrigues_coeffs(t2)
    k = skew_t(v)
    k2 = dc.matmul(k, k)
    return dc.add(_eye(p, v),
                  dc.add(dc.mul(_coef_to_mat(a, p), k), dc.mul(_coef_to_mat(b, p), k2)))


def quat_to_matrix_t(q: Tensor) -> Tensor:
    """Quaternions [P,4] (w,x,y,z), any nonzero norm, -> matrices [P,3,3]."""
    p = q.shape[0]
    n2 = dc.sum(dc.square(q), axis=1)
    if np.any(n2.data < 1e-12):
        raise ValueError("quat_to_matrix_t: zero-norm quaternion")
    s = dc.div(dc.as_tensor(np.full(p, 2.0, dtype=q.data.dtype)), n2)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    wx, wy, wz = dc.mul(dc.mul(s, w), x), dc.mul(dc.mul(s, w), y), dc.mul(dc.mul(s, w), z)
    xx, xy, xz = dc.mul(dc.mul(s, x), x), dc.mul(dc.mul(s, x), y), dc.mul(dc.mul(s, x), z)
    yy, yz, zz = dc.mul(dc.mul(s, y), y), dc.mul(dc.mul(s, y), z), dc.mul(dc.mul(s, z), z)
    one = dc.add(dc.scale(w, 0.0), 1.0)
    rows = dc.stack([
        dc.sub(one, dc.add(yy, zz)), dc.sub(xy, wz), dc.add(xz, wy),
        dc.add(xy, wz), dc.sub(one, dc.add(xx, zz)), dc.sub(yz, wx),
        dc.sub(xz, wy), dc.add(yz, wx), dc.sub(one, dc.add(xx, yy)),
    ], axis=1)
    return dc.reshape(rows, (p, 3, 3))


def matrix_to_euler_t(r: Tensor) -> Tensor:
    """Matrices [P,3,3] -> intrinsic XYZ Euler [P,3]; pitch away from +-pi/2."""
    s = dc.clamp(r[:, 0, 2], -1.0 + 1e-12, 1.0 - 1e-12)
    pitch = dc.atan2(s, dc.sqrt(dc.sub(1.0, dc.square(s))))
    roll = dc.atan2(dc.neg(r[:, 1, 2]), r[:, 2, 2])
    yaw = dc.atan2(dc.neg(r[:, 0, 1]), r[:, 0, 0])
    return dc.stack([roll, pitch, yaw], axis=1)


def matrix_to_rotvec_t(r: Tensor) -> Tensor:
    """Matrices [P,3,3] -> rotation vectors [P,3]; angle must stay below pi."""
    wx = dc.scale(dc.sub(r[:, 2, 1], r[:, 1, 2]), 0.5)
    wy = dc.scale(dc.sub(r[:, 0, 2], r[:, 2, 0]), 0.5)
    wz = dc.scale(dc.sub(r[:, 1, 0], r[:, 0, 1]), 0.5)
    w = dc.stack([wx, wy, wz], axis=1)          # sin(theta) * axis
    c = dc.scale(dc.sub(dc.add(dc.add(r[:, 0, 0], r[:, 1, 1]), r[:, 2, 2]), 1.0), 0.5)
    s2 = dc.sum(dc.square(w), axis=1)            # sin(theta)^2
    if np.any(c.data < -0.99):
        raise ValueError("matrix_to_rotvec_t: rotation angle at or near pi")
    small = s2.data < _SMALL_T2
    s2_safe = _safe(s2, small)
    sn = dc.sqrt(s2_safe)
    f_closed = dc.div(dc.atan2(sn, c), sn)       # theta / sin(theta)
    f_series = dc.add(dc.add(dc.scale(s2, 1.0 / 6.0), dc.scale(dc.square(s2), 3.0 / 40.0)), 1.0)
    f = dc.where(small, f_series, f_closed)
    p = w.shape[0]
    return dc.mul(w, dc.reshape(dc.stack([f, f, f], axis=1), (p, 3)))


def matrix_to_quat_t(r: Tensor) -> Tensor:
    """Matrices [P,3,3] -> unit quaternions [P,4] with canonical w >= 0."""
    tr = dc.add(dc.add(r[:, 0, 0], r[:, 1, 1]), r[:, 2, 2])
    d = r.data
    tr_d = d[:, 0, 0] + d[:, 1, 1] + d[:, 2, 2]
    case0 = tr_d > 0
    case1 = ~case0 & (d[:, 0, 0] >= d[:, 1, 1]) & (d[:, 0, 0] >= d[:, 2, 2])
    case2 = ~case0 & ~case1 & (d[:, 1, 1] >= d[:, 2, 2])
    case3 = ~(case0 | case1 | case2)

    def branch(t_val, comps):
        t_safe = dc.clamp(t_val, 1e-12, np.inf)
        scale_v = dc.div(dc.as_tensor(np.full(r.shape[0], 0.5, dtype=r.data.dtype)), dc.sqrt(t_safe))
        return [dc.mul(scale_v, comp) for comp in comps]

    t0 = dc.add(tr, 1.0)
    q0 = branch(t0, [t0,
                     dc.sub(r[:, 2, 1], r[:, 1, 2]),
                     dc.sub(r[:, 0, 2], r[:, 2, 0]),
                     dc.sub(r[:, 1, 0], r[:, 0, 1])])
    t1 = dc.add(dc.sub(dc.sub(r[:, 0, 0], r[:, 1, 1]), r[:, 2, 2]), 1.0)
    q1 = branch(t1, [dc.sub(r[:, 2, 1], r[:, 1, 2]),
                     t1,
                     dc.add(r[:, 0, 1], r[:, 1, 0]),
                     dc.add(r[:, 0, 2], r[:, 2, 0])])
    t2 = dc.add(dc.sub(dc.sub(r[:, 1, 1], r[:, 0, 0]), r[:, 2, 2]), 1.0)
    q2 = branch(t2, [dc.sub(r[:, 0, 2], r[:, 2, 0]),
                     dc.add(r[:, 0, 1], r[:, 1, 0]),
                     t2,
                     dc.add(r[:, 1, 2], r[:, 2, 1])])
    t3 = dc.add(dc.sub(dc.sub(r[:, 2, 2], r[:, 0, 0]), r[:, 1, 1]), 1.0)
    q3 = branch(t3, [dc.sub(r[:, 1, 0], r[:, 0, 1]),
                     dc.add(r[:, 0, 2], r[:, 2, 0]),
                     dc.add(r[:, 1, 2], r[:, 2, 1]),
                     t3])

    comps = []
    for i in range(4):
        sel = dc.where(case0, q0[i], q1[i])
        sel = dc.where(case2, q2[i], sel)
        sel = dc.where(case3, q3[i], sel)
        comps.append(sel)
    q = dc.stack(comps, axis=1)
    return canonical_quat_t(q)


def canonical_quat_t(q: Tensor) -> Tensor:
    """Normalize to unit length and flip sign so that w >= 0."""
    p = q.shape[0]
    n = dc.sqrt(dc.sum(dc.square(q), axis=1))
    if np.any(n.data < 1e-12):
        raise ValueError("canonical_quat_t: zero-norm quaternion")
    signs = np.where(q.data[:, 0] < 0, -1.0, 1.0).astype(q.data.dtype)
    inv = dc.div(dc.as_tensor(signs), n)
    return dc.mul(q, dc.reshape(dc.stack([inv] * 4, axis=1), (p, 4)))


def _jacobian_coeffs(t2: Tensor):
    """(B, C) for V = I + B*K + C*K^2, with series below the threshold."""
    small = t2.data < _SMALL_T2
    t2_safe = _safe(t2, small)
    theta = dc.sqrt(t2_safe)
    b_closed = dc.div(dc.sub(1.0, dc.cos(theta)), t2_safe)
    c_closed = dc.div(dc.sub(theta, dc.sin(theta)), dc.mul(t2_safe, theta))
    b_series = dc.add(dc.scale(t2, -1.0 / 24.0), 0.5)
    c_series = dc.add(dc.scale(t2, -1.0 / 120.0), 1.0 / 6.0)
    return dc.where(small, b_series, b_closed), dc.where(small, c_series, c_closed)


def left_jacobian_t(phi: Tensor) -> Tensor:
    """V(phi): translation part of se(3) exp is V(phi) @ rho."""
    p = phi.shape[0]
    t2 = dc.sum(dc.square(phi), axis=1)
    b, c = _jacobian_coeffs(t2)
    k = skew_t(phi)
    k2 = dc.matmul(k, k)
    return dc.add(_eye(p, phi),
                  dc.add(dc.mul(_coef_to_mat(b, p), k), dc.mul(_coef_to_mat(c, p), k2)))


def left_jacobian_inv_t(phi: Tensor) -> Tensor:
    """V(phi)^-1: rho = V^-1 @ t recovers the twist translation."""
    p = phi.shape[0]
    t2 = dc.sum(dc.square(phi), axis=1)
    small = t2.data < _SMALL_T2
    t2_safe = _safe(t2, small)
    theta = dc.sqrt(t2_safe)
    a = dc.div(dc.sin(theta), theta)
    b = dc.div(dc.sub(1.0, dc.cos(theta)), t2_safe)
    d_closed = dc.div(dc.sub(1.0, dc.div(a, dc.scale(b, 2.0))), t2_safe)
    d_series = dc.add(dc.scale(t2, 1.0 / 720.0), 1.0 / 12.0)
    dcoef = dc.where(small, d_series, d_closed)
    k = skew_t(phi)
    k2 = dc.matmul(k, k)
    return dc.add(_eye(p, phi),
                  dc.add(dc.scale(k, -0.5), dc.mul(_coef_to_mat(dcoef, p), k2)))


def compose_chain_t(rot: Tensor, trans: Tensor) -> tuple[Tensor, Tensor]:
    """Accumulate per-pair relative transforms into window-global poses.

    rot [P,3,3], trans [P,3] are the relative motions of pairs
    (0->1, ..., P-1->P); returns global rotations [P,3,3] and
    translations [P,3] of frames 1..P relative to frame 0.
    """
    p = rot.shape[0]
    g_rots, g_trans = [], []
    r_acc, t_acc = None, None
    for k in range(p):
        r_k = rot[k]
        t_k = trans[k]
        if k == 0:
            r_acc, t_acc = r_k, t_k
        else:
            t_acc = dc.add(dc.reshape(dc.matmul(r_acc, dc.reshape(t_k, (3, 1))), (3,)), t_acc)
            r_acc = dc.matmul(r_acc, r_k)
        g_rots.append(r_acc)
        g_trans.append(t_acc)
    return dc.stack(g_rots, axis=0), dc.stack(g_trans, axis=0)
