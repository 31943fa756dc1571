"""Spherical projection of 3-D scans into vertex maps, normal-map
estimation from range-image neighbours, and frame stacking for the
network input."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ProjectionConfig", "VertexNormalPair", "project_vertex_map",
    "compute_normal_map", "stack_frames", "save_depth_preview", "save_normal_preview",
]

MIN_RANGE = 1e-6


@dataclass(frozen=True)
class ProjectionConfig:
    """Range-image geometry.

    ``f_u``/``f_v`` are the maximum horizontal/vertical angles (radians),
    ``eta_u``/``eta_v`` the per-pixel resolutions. A point at azimuth a and
    elevation e lands at column (f_u - a)/eta_u, row (f_v - e)/eta_v
    (floored, clamped to the grid).

    ``elevation_mode`` selects how elevation is measured: "horizontal"
    (angle above the horizontal plane, atan2(z, sqrt(x^2+y^2)), the usual
    range-image convention) or "full_norm" (arctan(z / ||p||), which
    compresses elevation near the poles but matches the written projection
    formula verbatim).
    """

    width: int = 128
    height: int = 16
    f_u: float = np.pi
    f_v: float = 0.0524  # ~3 degrees above horizontal
    eta_u: float = field(default=0.0)
    eta_v: float = field(default=0.0)
    elevation_mode: str = "horizontal"

    def __post_init__(self):
        if self.eta_u == 0.0:
            object.__setattr__(self, "eta_u", 2.0 * np.pi / self.width)
        if self.eta_v == 0.0:
            # default vertical span: 30 degrees below f_v
            object.__setattr__(self, "eta_v", np.deg2rad(30.0) / self.height)
        if self.elevation_mode not in ("horizontal", "full_norm"):
            raise ValueError(f"elevation_mode must be 'horizontal' or 'full_norm', got {self.elevation_mode!r}")
        if self.f_u / self.eta_u > self.width + 1e-9:
            raise ValueError(f"f_u/eta_u = {self.f_u / self.eta_u:.3f} exceeds width {self.width}")
        if self.f_v / self.eta_v > self.height + 1e-9:
            raise ValueError(f"f_v/eta_v = {self.f_v / self.eta_v:.3f} exceeds height {self.height}")

    @staticmethod
    def full_scale() -> "ProjectionConfig":
        """KITTI-like grid: 720 x 60, ~27 degree vertical span."""
        return ProjectionConfig(width=720, height=60, f_v=np.deg2rad(2.0),
                                eta_v=np.deg2rad(26.8) / 60)


@dataclass
class VertexNormalPair:
    """Per-scan range-image pair: vertex map, normal map, validity, depth."""

    vertex: np.ndarray          # H x W x 3, meters
    normal: np.ndarray          # H x W x 3, unit vectors or exact zero
    valid: np.ndarray           # H x W bool
    depth: np.ndarray           # H x W, meters (0 where invalid)

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape


def _angles(points: np.ndarray, mode: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    d = np.linalg.norm(points, axis=1)
    azimuth = np.arctan2(points[:, 1], points[:, 0])
    if mode == "horizontal":
        elevation = np.arctan2(points[:, 2], np.hypot(points[:, 0], points[:, 1]))
    else:
        elevation = np.arctan(points[:, 2] / d)
    return d, azimuth, elevation


def project_vertex_map(points, cfg: ProjectionConfig) -> VertexNormalPair:
    """Spherical projection; pixel collisions keep the nearest point."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise ValueError("project_vertex_map: empty point cloud")
    d_all = np.linalg.norm(pts, axis=1)
    keep = d_all >= MIN_RANGE
    pts = pts[keep]
    if pts.shape[0] == 0:
        raise ValueError("project_vertex_map: all points below the minimum range")

    d, azimuth, elevation = _angles(pts, cfg.elevation_mode)
    u = np.floor((cfg.f_u - azimuth) / cfg.eta_u).astype(np.int64)
    v = np.floor((cfg.f_v - elevation) / cfg.eta_v).astype(np.int64)
    u = np.clip(u, 0, cfg.width - 1)
    v = np.clip(v, 0, cfg.height - 1)

    order = np.argsort(-d, kind="stable")  # nearest written last wins
    u, v, d, pts = u[order], v[order], d[order], pts[order]

    vertex = np.zeros((cfg.height, cfg.width, 3))
    depth = np.zeros((cfg.height, cfg.width))
    valid = np.zeros((cfg.height, cfg.width), dtype=bool)
    vertex[v, u] = pts
    depth[v, u] = d
    valid[v, u] = True
    return VertexNormalPair(vertex=vertex, normal=np.zeros_like(vertex), valid=valid, depth=depth)


def compute_normal_map(vn: VertexNormalPair) -> VertexNormalPair:
    """Weighted cross products over the cyclic up/right/down/left neighbours.

    Each cyclic pair (p_i, p_{i+1}) with both neighbours valid contributes
    w_i (v_i - v) x w_{i+1} (v_{i+1} - v), w = exp(-0.5 |d_a - d_b|).
    Pixels with fewer than two valid terms get an exact zero normal;
    otherwise the sum is normalized to unit length.
    """
    H, W = vn.shape
    vertex, depth, valid = vn.vertex, vn.depth, vn.valid

    def shifted(di, dj):
        """Neighbour arrays shifted by (di, dj); off-grid marked invalid."""
        vert = np.zeros_like(vertex)
        dep = np.zeros_like(depth)
        ok = np.zeros_like(valid)
        src_i = slice(max(di, 0), H + min(di, 0))
        dst_i = slice(max(-di, 0), H + min(-di, 0))
        src_j = slice(max(dj, 0), W + min(dj, 0))
        dst_j = slice(max(-dj, 0), W + min(-dj, 0))
        vert[dst_i, dst_j] = vertex[src_i, src_j]
        dep[dst_i, dst_j] = depth[src_i, src_j]
        ok[dst_i, dst_j] = valid[src_i, src_j]
        return vert, dep, ok

    # up/right/down/left in image coordinates (row -1 is up)
    neighbours = [shifted(-1, 0), shifted(0, 1), shifted(1, 0), shifted(0, -1)]

    total = np.zeros_like(vertex)
    term_count = np.zeros((H, W), dtype=np.int64)
    for i in range(4):
        va, da, oka = neighbours[i]
        vb, db, okb = neighbours[(i + 1) % 4]
        ok = valid & oka & okb
        wa = np.exp(-0.5 * np.abs(da - depth))
        wb = np.exp(-0.5 * np.abs(db - depth))
        cross = np.cross(wa[..., None] * (va - vertex), wb[..., None] * (vb - vertex))
        total += np.where(ok[..., None], cross, 0.0)
        term_count += ok

    norm = np.linalg.norm(total, axis=2)
    good = (term_count >= 2) & (norm > 1e-12)
    normal = np.zeros_like(vertex)
    normal[good] = total[good] / norm[good, None]
    return VertexNormalPair(vertex=vertex, normal=normal, valid=valid, depth=depth)


def stack_frames(a: VertexNormalPair, b: VertexNormalPair) -> tuple[np.ndarray, np.ndarray]:
    """Concatenate two consecutive scans channel-wise for the network.

    Returns (vertex6, normal6), each [6, H, W] channels-first with frame t
    in channels 0-2 and frame t+1 in channels 3-5; invalid pixels are zero.
    """
    if a.shape != b.shape:
        raise ValueError(f"stack_frames: resolution mismatch {a.shape} vs {b.shape}")

    def chw(pair: VertexNormalPair, which: str) -> np.ndarray:
        arr = getattr(pair, which)
        arr = np.where(pair.valid[..., None], arr, 0.0)
        return np.moveaxis(arr, 2, 0)

    vertex6 = np.concatenate([chw(a, "vertex"), chw(b, "vertex")], axis=0)
    normal6 = np.concatenate([chw(a, "normal"), chw(b, "normal")], axis=0)
    return vertex6, normal6


def save_depth_preview(vn: VertexNormalPair, path) -> None:
    """Grayscale PNG of the depth map (max-normalized)."""
    from PIL import Image
    depth = vn.depth.copy()
    top = depth.max() if depth.max() > 0 else 1.0
    img = (255.0 * depth / top).astype(np.uint8)
    Image.fromarray(img, mode="L").save(path)


def save_normal_preview(vn: VertexNormalPair, path) -> None:
    """RGB PNG with normals mapped (n + 1) / 2."""
    from PIL import Image
    rgb = np.clip((vn.normal + 1.0) * 0.5 * 255.0, 0, 255).astype(np.uint8)
    Image.fromarray(rgb, mode="RGB").save(path)
